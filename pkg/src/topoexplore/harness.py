"""Experiment runner: closed-loop simulation, metrics, comparisons and renders."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from . import render as rnd
from .explore_vi import VIController, compute_cost_matrix
from .navigate import TopoController
from .occupancy import OccupancyGrid, classify, coverage, integrate_scan, mark_footprint
from .topo_graph import build_graph
from .world import DT, ROBOT_RADIUS, load_map, scan_noise, sonar_scan, step_robot

log = logging.getLogger(__name__)

CONTROLLERS = ("vi", "topo")
CSV_COLUMNS = ("map", "controller", "seed", "steps", "sim_time_s", "entities", "coverage",
               "completed", "collisions", "rebuilds")
MAZE_CLASS = ("maze", "office", "aaai")
OPEN_CLASS = ("open_room", "radial_maze")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    map: str = "open_room"
    controller: str = "topo"
    seed: int = 1
    steps: int = 50_000
    noise: bool = True
    coverage_target: float = 0.95
    inflation: float = 1.5  # extra clearance (cells) on top of the robot radius
    # value iteration
    w_c: float = 1.0
    w_h: float = 0.3
    w_o: float = 2.0
    stop_distance: float = 0.04
    rebuild_every: int = 10
    # topological graph
    limit: float = 3.0
    margin: float = -1.0  # negative: robot radius in cells + 2
    goal_radius: int = 12
    window: int = 5
    delta: float = 0.002
    tolerance: float = 1.5 * ROBOT_RADIUS
    split_mode: str = "max"
    literal_thinning: bool = False

    def validate(self):
        checks = [
            (self.controller in CONTROLLERS, f"controller must be one of {CONTROLLERS}"),
            (self.steps > 0, "steps must be > 0"),
            (0.0 < self.coverage_target <= 1.0, "coverage_target must be in (0, 1]"),
            (self.w_c >= 0 and self.w_h >= 0 and self.w_o >= 0, "weights must be >= 0"),
            (self.stop_distance >= 0, "stop_distance must be >= 0"),
            (self.inflation >= 0, "inflation must be >= 0"),
            (self.rebuild_every >= 1, "rebuild_every must be >= 1"),
            (self.limit > 0, "limit must be > 0"),
            (self.goal_radius >= 1, "goal_radius must be >= 1"),
            (self.window >= 1, "window must be >= 1"),
            (self.delta >= 0, "delta must be >= 0"),
            (self.tolerance > 0, "tolerance must be > 0"),
            (self.split_mode in ("max", "first"), "split_mode must be 'max' or 'first'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def _convert(name, raw, kind):
    if kind is bool:
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def config_types():
    return {f.name: type(f.default) for f in fields(ExperimentConfig)}


def parse_config_text(text):
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    types = config_types()
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {n}: expected key=value")
        if key not in types:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = _convert(key, value.strip(), types[key])
    return out


def make_config(overrides=None, config_file=None, **kwargs):
    values = {}
    if config_file:
        with open(config_file, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update(overrides or {})
    values.update(kwargs)
    types = config_types()
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    values = {k: _convert(k, v, types[k]) if isinstance(v, str) and types[k] is not str else v
              for k, v in values.items()}
    return ExperimentConfig(**values).validate()


@dataclass(frozen=True)
class MetricsRecord:
    map: str
    controller: str
    seed: int
    steps: int
    sim_time_s: float
    entities: int
    coverage: float
    completed: bool
    collisions: int
    rebuilds: int
    plan_time_s: float = field(default=0.0, compare=False)

    def row(self):
        d = asdict(self)
        return [repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in CSV_COLUMNS]


def write_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())


def records_to_csv(records):
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def read_csv(fh):
    out = []
    for row in csv.DictReader(fh):
        out.append(MetricsRecord(
            map=row["map"], controller=row["controller"], seed=int(row["seed"]),
            steps=int(row["steps"]), sim_time_s=float(row["sim_time_s"]),
            entities=int(row["entities"]), coverage=float(row["coverage"]),
            completed=row["completed"] == "True", collisions=int(row["collisions"]),
            rebuilds=int(row["rebuilds"])))
    return out


@dataclass(eq=False)
class RunArtifacts:
    config: ExperimentConfig
    world: object
    grid: OccupancyGrid
    classmap: np.ndarray
    events: list
    cost: np.ndarray | None = None
    build: object = None

    @property
    def clearance(self):
        return _clearance(self.config, self.world)

    @cached_property
    def cost_matrix(self):
        if self.cost is not None:
            return self.cost
        return compute_cost_matrix(self.classmap, self.clearance)

    @cached_property
    def graph_build(self):
        return final_graph(self.classmap, self.config, self.world)

    def image_bytes(self, stage):
        if stage == "grid":
            return rnd.pgm_bytes(rnd.grid_image(self.grid))
        if stage == "classmap":
            return rnd.pgm_bytes(rnd.classmap_image(self.classmap))
        if stage == "cost":
            return rnd.pgm_bytes(rnd.cost_image(self.cost_matrix))
        if stage == "skeleton":
            b = self.graph_build
            return rnd.pgm_bytes(rnd.skeleton_image(b.image, b.skeleton))
        if stage == "graph":
            return rnd.ppm_bytes(rnd.graph_image(self.graph_build, self.classmap))
        raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(rnd.STAGES)}")

    def render(self, stage, path):
        data = self.image_bytes(stage)
        with open(path, "wb") as fh:
            fh.write(data)
        return path

    def render_all(self, directory):
        os.makedirs(directory, exist_ok=True)
        paths = []
        for stage in rnd.STAGES:
            ext = "ppm" if stage == "graph" else "pgm"
            paths.append(self.render(stage, os.path.join(directory, f"{stage}.{ext}")))
        return paths


def _clearance(cfg, world):
    return world.radius_cells() + cfg.inflation


def _margin(cfg, world):
    return cfg.margin if cfg.margin >= 0 else _clearance(cfg, world) + 2.0


def final_graph(classmap, cfg, world):
    return build_graph(classmap, cfg.limit, _margin(cfg, world), _clearance(cfg, world),
                       world.cell_size, cfg.split_mode, cfg.literal_thinning)


def _controller(cfg, world):
    if cfg.controller == "vi":
        return VIController(world.cell_size, _clearance(cfg, world), cfg.w_c, cfg.w_h, cfg.w_o,
                            cfg.stop_distance, cfg.rebuild_every)
    return TopoController(world.cell_size, _clearance(cfg, world), window=cfg.window,
                          delta=cfg.delta, limit=cfg.limit, margin=_margin(cfg, world),
                          goal_radius=cfg.goal_radius, tolerance=cfg.tolerance,
                          stop_distance=cfg.stop_distance, coverage_target=cfg.coverage_target,
                          split_mode=cfg.split_mode, literal_thinning=cfg.literal_thinning)


def simulate(cfg, world=None):
    """Run one experiment; returns ``(MetricsRecord, RunArtifacts)``."""
    cfg.validate()
    world = world or load_map(cfg.map)
    reach = world.reachable()
    grid = OccupancyGrid.like(world)
    state = world.start
    ctrl = _controller(cfg, world)
    events = []
    collisions = 0
    completed = False
    steps = cfg.steps

    def sense(step, state):
        noise = scan_noise(cfg.seed, step) if cfg.noise else None
        scan = sonar_scan(world, state, noise)
        integrate_scan(grid, state, scan)
        mark_footprint(grid, state)
        classmap = classify(grid)
        return scan, classmap, coverage(classmap, world, reach)

    for step in range(cfg.steps + 1):
        scan, classmap, cov = sense(step, state)
        if cov >= cfg.coverage_target:
            completed = True
            steps = step
            events.append(f"{step},done,{cov:.6f},coverage-reached")
            break
        if step == cfg.steps:
            break
        if cfg.controller == "vi":
            v, omega = ctrl.step(step, state, scan, classmap)
        else:
            v, omega = ctrl.step(step, state, scan, classmap, cov)
        state = step_robot(world, state, v, omega)
        if state.bumped:
            collisions += 1
            events.append(f"{step},bump,{cov:.6f},collision")

    if cfg.controller == "topo":
        events = ctrl.events + events
    artifacts = RunArtifacts(cfg, world, grid, classmap, events,
                             cost=ctrl.cost if cfg.controller == "vi" else None)
    if cfg.controller == "vi":
        entities = world.width * world.height
    else:
        entities = artifacts.graph_build.node_count
    record = MetricsRecord(
        map=cfg.map, controller=cfg.controller, seed=cfg.seed, steps=steps,
        sim_time_s=steps * DT, entities=entities, coverage=cov, completed=completed,
        collisions=collisions, rebuilds=len(ctrl.plan_times),
        plan_time_s=float(np.mean(ctrl.plan_times)) if ctrl.plan_times else 0.0)
    log.info("%s/%s seed=%d steps=%d coverage=%.3f", cfg.map, cfg.controller, cfg.seed, steps, cov)
    return record, artifacts


def run(cfg, render_dir=None, events_path=None):
    """Simulate, optionally writing renders and the event log."""
    record, artifacts = simulate(cfg)
    if render_dir:
        artifacts.render_all(render_dir)
    if events_path:
        with open(events_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,mode,coverage,event\n")
            fh.writelines(e + "\n" for e in artifacts.events)
    return record


def _run_cell(cfg):
    try:
        return simulate(cfg)[0], None
    except Exception as exc:  # reported per cell, other cells continue
        return None, f"{cfg.map}/{cfg.controller}/seed={cfg.seed}: {exc}"


@dataclass
class Comparison:
    records: list
    errors: list

    def means(self, map_name, controller, attr="steps"):
        vals = [getattr(r, attr) for r in self.records
                if r.map == map_name and r.controller == controller]
        return float(np.mean(vals)) if vals else float("nan")

    def maps(self):
        return list(dict.fromkeys(r.map for r in self.records))

    def profit(self, map_name):
        vi, topo = self.means(map_name, "vi"), self.means(map_name, "topo")
        return (vi - topo) / vi

    def flags(self):
        """Acceptance flags keyed by a short description."""
        out = {}
        recs = self.records
        out["no run errors"] = not self.errors
        out["all runs reach coverage target"] = all(r.completed for r in recs)
        out["zero collisions"] = all(r.collisions == 0 for r in recs)
        for m in self.maps():
            vi = [r for r in recs if r.map == m and r.controller == "vi"]
            topo = [r for r in recs if r.map == m and r.controller == "topo"]
            if not vi or not topo:
                continue
            ratio = self.means(m, "topo") / self.means(m, "vi")
            if m in MAZE_CLASS:
                out[f"{m}: topo steps <= 85% of vi"] = ratio <= 0.85
            elif m in OPEN_CLASS:
                out[f"{m}: topo steps <= 110% of vi"] = ratio <= 1.10
            ent = min(r.entities for r in vi) / max(max(r.entities for r in topo), 1)
            out[f"{m}: entity ratio >= 50"] = ent >= 50
        return out

    def table(self):
        lines = [f"{'map':<12} {'vi steps':>10} {'topo steps':>10} {'vi s':>8} {'topo s':>8} "
                 f"{'vi ent':>7} {'topo ent':>8} {'profit':>7}"]
        for m in self.maps():
            lines.append(
                f"{m:<12} {self.means(m, 'vi'):>10.1f} {self.means(m, 'topo'):>10.1f} "
                f"{self.means(m, 'vi', 'sim_time_s'):>8.1f} {self.means(m, 'topo', 'sim_time_s'):>8.1f} "
                f"{self.means(m, 'vi', 'entities'):>7.0f} {self.means(m, 'topo', 'entities'):>8.1f} "
                f"{100 * self.profit(m):>6.1f}%")
        return "\n".join(lines)


def compare(maps, seeds, base=None, jobs=1):
    """Run both controllers on every (map, seed); results in a fixed order."""
    if not maps or not seeds:
        raise ConfigError("compare needs at least one map and one seed")
    base = base or ExperimentConfig()
    cells = [replace(base, map=m, controller=c, seed=s)
             for m in maps for c in CONTROLLERS for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    records = [r for r, _ in results if r is not None]
    errors = [e for _, e in results if e is not None]
    return Comparison(records, errors)
