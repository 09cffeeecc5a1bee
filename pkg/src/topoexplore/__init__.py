"""Exploration of simulated grid worlds with a sonar robot: a value-iteration
frontier explorer and a topological-graph explorer built from the
occupancy grid skeleton."""

from .harness import ExperimentConfig, MetricsRecord, compare, run, simulate
from .world import BUNDLED_MAPS, load_map, load_world

__all__ = ["ExperimentConfig", "MetricsRecord", "compare", "run", "simulate",
           "BUNDLED_MAPS", "load_map", "load_world"]
__version__ = "0.1.0"
