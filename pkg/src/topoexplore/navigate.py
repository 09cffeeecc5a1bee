"""Topological exploration: goal nodes near unexplored space, A* over the
navigation graph, waypoint following, and reactive wandering in between."""

from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .explore_vi import exploration_targets, traversable_cells
from .motion import forward_clearance, govern, guard, normal_move, open_bearing, sector_min, steer
from .occupancy import FREE, OCCUPIED, UNKNOWN
from .topo_graph import build_graph
from .world import DT, OMEGA_MAX, ROBOT_RADIUS, V_MAX, wrap_angle

DETOUR_STEPS = 8

__all__ = [
    "NoPath", "EmptyGraph", "Mode", "ControllerState", "TopoController",
    "select_goals", "astar", "astar_search", "attach_robot", "follow_path",
    "normal_move", "controller_step",
]


class NoPath(Exception):
    """No goal node is reachable from the start node."""


class EmptyGraph(Exception):
    """The navigation graph has no nodes."""


class Mode(Enum):
    NORMAL_MOVE = "normal"
    FOLLOW_PATH = "follow"


def unexplored_cells(classmap, clearance=0.0):
    """UNKNOWN cells bordering a frontier cell the robot can stand on.

    With ``clearance=0`` this is every UNKNOWN cell next to FREE space.
    Unseen pockets behind walls or in tight corners are left out.
    """
    targets = exploration_targets(classmap, clearance)
    near = ndimage.binary_dilation(targets, structure=np.ones((3, 3), bool))
    return near & (classmap == UNKNOWN)


def select_goals(graph, classmap, radius, clearance=0.0, fallback=True, ignore=None):
    """Nodes with unexplored space within ``radius`` cells (Chebyshev).

    With ``fallback`` and no node that close, the nodes nearest to any
    unexplored cell are returned instead, so the set is empty only when
    nothing is left to explore. Cells set in ``ignore`` never count.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    unknown = unexplored_cells(classmap, clearance)
    if ignore is not None:
        unknown &= ~ignore
    if not unknown.any() or not graph.nodes:
        return set()
    dist = ndimage.distance_transform_cdt(~unknown, metric="chessboard")
    d = {nid: int(dist[n.ij]) for nid, n in graph.nodes.items()}
    goals = {nid for nid, v in d.items() if v <= radius}
    if not goals and fallback:
        best = min(d.values())
        goals = {nid for nid, v in d.items() if v == best}
    return goals


def nearest_unexplored(classmap, cell, clearance=0.0, cell_size=1.0, ignore=None):
    """Metric centre of the unexplored cell closest to ``cell`` that is in
    straight view of it (no OCCUPIED cell in between), or None."""
    unknown = unexplored_cells(classmap, clearance)
    if ignore is not None:
        unknown &= ~ignore
    ii, jj = np.nonzero(unknown)
    if ii.size == 0:
        return None
    i0, j0 = cell
    order = np.argsort((ii - i0) ** 2 + (jj - j0) ** 2, kind="stable")
    blocked = classmap == OCCUPIED
    for k in order[:64]:
        i, j = int(ii[k]), int(jj[k])
        n = max(abs(i - i0), abs(j - j0)) * 2 + 1
        ri = np.rint(np.linspace(i0, i, n)).astype(int)
        rj = np.rint(np.linspace(j0, j, n)).astype(int)
        if not blocked[ri, rj].any():
            return (j + 0.5) * cell_size, (i + 0.5) * cell_size
    return None


def astar_search(graph, start, goals):
    """A* from ``start`` to the cheapest goal. Heuristic is the straight-line
    distance to the nearest goal. Returns ``(path, cost, expanded)``."""
    if start not in graph.nodes:
        raise KeyError(f"start node {start} not in graph")
    goals = set(goals)
    if not goals:
        raise NoPath("no goals")
    goal_xy = np.array([graph.position(g) for g in sorted(goals)])
    adj = graph.adjacency()

    def h(n):
        x, y = graph.position(n)
        return float(np.min(np.hypot(goal_xy[:, 0] - x, goal_xy[:, 1] - y)))

    g_cost = {start: 0.0}
    parent = {start: None}
    closed = set()
    heap = [(h(start), start)]
    expanded = 0
    while heap:
        f, n = heapq.heappop(heap)
        if n in closed:
            continue
        closed.add(n)
        if n in goals:
            path = [n]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], g_cost[n], expanded
        expanded += 1
        for m, w, _ in sorted(adj[n]):
            if m in closed:
                continue
            cand = g_cost[n] + w
            if cand < g_cost.get(m, math.inf):
                g_cost[m] = cand
                parent[m] = n
                heapq.heappush(heap, (cand + h(m), m))
    raise NoPath(f"no goal reachable from node {start}")


def astar(graph, start, goals):
    """Shortest node path from ``start`` to the nearest reachable goal."""
    return astar_search(graph, start, goals)[0]


def line_of_sight(classmap, a, b, cell_size):
    """True if every cell crossed by the segment a -> b (metric) is FREE,
    ignoring the cell at ``a`` itself."""
    (x0, y0), (x1, y1) = a, b
    n = max(1, int(math.ceil(math.hypot(x1 - x0, y1 - y0) / (cell_size / 4.0))))
    start = (int(y0 // cell_size), int(x0 // cell_size))
    for k in range(1, n + 1):
        t = k / n
        cell = (int((y0 + t * (y1 - y0)) // cell_size), int((x0 + t * (x1 - x0)) // cell_size))
        if cell != start and classmap[cell] != FREE:
            return False
    return True


def attach_robot(graph, state, classmap=None, passable=None):
    """Nearest node the robot can drive to in a straight line over
    ``passable`` cells, else the nearest it can see over FREE cells, else
    the nearest outright."""
    if not graph.nodes:
        raise EmptyGraph("navigation graph is empty")
    order = sorted(graph.nodes, key=lambda n: (math.dist(graph.position(n), (state.x, state.y)), n))
    if passable is not None:
        for n in order:
            if segment_clear(passable, (state.x, state.y), graph.position(n), graph.cell_size):
                return n
    if classmap is not None:
        for n in order:
            if line_of_sight(classmap, (state.x, state.y), graph.position(n), graph.cell_size):
                return n
    return order[0]


def segment_clear(passable, a, b, cell_size, skip=1.0):
    """True if the straight segment a -> b (metric) only crosses cells of
    ``passable``; the first ``skip`` cells next to ``a`` are not checked."""
    (x0, y0), (x1, y1) = a, b
    length = math.hypot(x1 - x0, y1 - y0) / cell_size
    n = max(1, int(math.ceil(length * 2)))
    h, w = passable.shape
    for k in range(n + 1):
        t = k / n
        if t * length < skip:
            continue
        i = int((y0 + t * (y1 - y0)) // cell_size)
        j = int((x0 + t * (x1 - x0)) // cell_size)
        if not (0 <= i < h and 0 <= j < w) or not passable[i, j]:
            return False
    return True


def shortcut(path, state, passable, cell_size):
    """Drop leading waypoints while the one after is in straight view."""
    if passable is None:
        return path
    path = list(path)
    while len(path) >= 2 and segment_clear(passable, (state.x, state.y), path[1], cell_size):
        path.pop(0)
    return path


def follow_path(state, path, tolerance=1.5 * ROBOT_RADIUS, v_max=V_MAX,
                omega_max=OMEGA_MAX, dt=DT):
    """Head for the first waypoint; pop it once within ``tolerance``.

    ``path`` is a list of metric (x, y) waypoints. Returns
    ``((v, omega), remaining)``; an emptied path yields a stop command.
    """
    path = list(path)
    if path and math.dist(path[0], (state.x, state.y)) <= tolerance:
        path.pop(0)
    if not path:
        return (0.0, 0.0), path
    tx, ty = path[0]
    err = wrap_angle(math.atan2(ty - state.y, tx - state.x) - state.heading)
    return steer(err, v_max, omega_max, dt), path


@dataclass
class ControllerState:
    mode: Mode = Mode.NORMAL_MOVE
    path: list = field(default_factory=list)
    history: deque = field(default_factory=lambda: deque(maxlen=6))
    turning: float = 0.0
    complete: bool = False
    budget: int = 0
    final: tuple = None


@dataclass
class TopoController:
    """Alternates reactive wandering with graph navigation. The graph is
    rebuilt only when coverage stagnates."""

    cell_size: float
    clearance: float
    window: int = 5
    delta: float = 0.002
    limit: float = 3.0
    margin: float | None = None
    goal_radius: int = 12
    tolerance: float = 1.5 * ROBOT_RADIUS
    stop_distance: float = 0.04
    coverage_target: float = 0.95
    split_mode: str = "max"
    literal_thinning: bool = False
    extend: bool = True
    shortcut: bool = True
    state: ControllerState = None
    events: list = field(default_factory=list)
    plan_times: list = field(default_factory=list)
    last_build: object = None
    last_path: list = field(default_factory=list)
    exhausted: np.ndarray | None = None
    _targets: np.ndarray | None = None
    _passable: np.ndarray | None = None
    _detour: list | None = None

    def __post_init__(self):
        if self.margin is None:
            self.margin = self.clearance + 2.0
        if self.state is None:
            self.state = ControllerState(history=deque(maxlen=self.window + 1))

    def log(self, step, coverage, event):
        self.events.append(f"{step},{self.state.mode.value},{coverage:.6f},{event}")

    def plan(self, state, classmap, coverage):
        """Build the graph and return metric waypoints, or None."""
        t0 = time.perf_counter()
        build = build_graph(classmap, self.limit, self.margin, self.clearance, self.cell_size,
                            self.split_mode, self.literal_thinning)
        self.last_build = build
        g = build.graph
        try:
            if not g.nodes:
                return None, "empty-graph"
            goals = select_goals(g, classmap, self.goal_radius, self.clearance,
                                 ignore=self.exhausted)
            if not goals and self.exhausted is not None and self.exhausted.any():
                # everything left was given up on once; try it all again
                self.exhausted[:] = False
                goals = select_goals(g, classmap, self.goal_radius, self.clearance)
            if not goals:
                return None, "complete" if coverage >= self.coverage_target else "no-goals"
            passable = traversable_cells(classmap, self.clearance)
            start = attach_robot(g, state, classmap, passable)
            try:
                nodes = astar(g, start, goals)
            except NoPath:
                return None, "no-path"
            self.last_path = nodes
            self._targets = unexplored_cells(classmap, self.clearance)
            self._passable = passable
            waypoints = [g.position(n) for n in nodes]
            if self.extend:
                tip = nearest_unexplored(classmap, g.nodes[nodes[-1]].ij, self.clearance,
                                         self.cell_size, self.exhausted)
                if tip is not None:
                    waypoints.append(tip)
            return waypoints, f"plan nodes={g.node_count} path={len(nodes)}"
        finally:
            self.plan_times.append(time.perf_counter() - t0)

    def _retire(self, classmap, final):
        """Give up on planned targets near ``final`` that are still unexplored
        after the trip: they cannot be seen from where the robot can go."""
        if self._targets is None or final is None:
            return
        if self.exhausted is None:
            self.exhausted = np.zeros(classmap.shape, dtype=bool)
        i = int(final[1] // self.cell_size)
        j = int(final[0] // self.cell_size)
        ti, tj = np.nonzero(self._targets)
        if ti.size == 0:
            self._targets = None
            return
        # a fallback goal may sit further than goal_radius from its targets
        nearest = int(np.min(np.maximum(np.abs(ti - i), np.abs(tj - j))))
        r = max(int(self.goal_radius), nearest) + 2
        window = np.zeros(classmap.shape, dtype=bool)
        window[max(i - r, 0):i + r + 1, max(j - r, 0):j + r + 1] = True
        self.exhausted |= self._targets & window & unexplored_cells(classmap, self.clearance)
        self._targets = None

    def _wander(self, state, scan):
        v, omega = normal_move(scan, state, self.state.turning)
        self.state.turning = omega if v == 0.0 and omega != 0.0 else 0.0
        return v, omega

    def _budget(self, state, waypoint):
        return int(2.0 * math.dist(waypoint, (state.x, state.y)) / (V_MAX * DT)) + 40

    def step(self, step, state, scan, classmap, coverage):
        occupied = classmap == OCCUPIED
        v, omega = self._command(step, state, scan, classmap, coverage)
        if self._detour is not None:
            v, omega = steer(wrap_angle(self._detour[0] - state.heading))
        gv, gomega = guard(v, omega, state, scan, occupied, self.cell_size)
        if v > 0.0 and gv < 0.1 * v:
            # pinned: commit to the nearest open bearing for a few steps
            want = state.heading + 0.5 * omega * DT
            bearing = open_bearing(want, state, scan, occupied, self.cell_size)
            if bearing is None:
                self._detour = None
                return 0.0, OMEGA_MAX
            self._detour = [bearing, DETOUR_STEPS]
            return steer(wrap_angle(bearing - state.heading), v_max=0.0)
        if self._detour is not None and gv > 0.0:
            self._detour[1] -= 1
            if self._detour[1] <= 0:
                self._detour = None
        return gv, gomega

    def _command(self, step, state, scan, classmap, coverage):
        c = self.state
        if c.mode is Mode.NORMAL_MOVE:
            c.history.append(coverage)
            stalled = (len(c.history) == c.history.maxlen
                       and c.history[-1] - c.history[0] < self.delta)
            if stalled:
                c.history.clear()
                path, event = self.plan(state, classmap, coverage)
                if event == "complete":
                    c.complete = True
                if path:
                    c.mode = Mode.FOLLOW_PATH
                    c.path = path
                    c.final = path[-1]
                    c.budget = self._budget(state, path[0])
                self.log(step, coverage, event)
            if c.mode is Mode.NORMAL_MOVE:
                return self._wander(state, scan)

        before = len(c.path)
        if self.shortcut:
            c.path = shortcut(c.path, state, self._passable, self.cell_size)
        (v, omega), c.path = follow_path(state, c.path, self.tolerance)
        if len(c.path) < before and c.path:
            c.budget = self._budget(state, c.path[0])
        c.budget -= 1
        blocked = v > 0.0 and forward_clearance(scan, state.radius) < self.stop_distance \
            and sector_min(scan, 0.0) < self.stop_distance
        if not c.path or blocked or c.budget < 0:
            reason = "arrived" if not c.path else ("blocked" if blocked else "timeout")
            if not c.path:
                self._retire(classmap, c.final)
            else:
                self._targets = None
            c.mode = Mode.NORMAL_MOVE
            c.path = []
            c.history.clear()
            self.log(step, coverage, reason)
            return self._wander(state, scan)
        return govern(v, omega, scan, state.radius)


def controller_step(ctrl, step, state, scan, classmap, coverage):
    """One control step of a ``TopoController``; returns ``(v, omega)``."""
    return ctrl.step(step, state, scan, classmap, coverage)
