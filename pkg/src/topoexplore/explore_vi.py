"""Value-iteration exploration: a cost-to-frontier matrix plus a reactive
direction blend of cost descent, heading inertia and obstacle proximity."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .motion import govern, guard, normal_move, sector_min, steer
from .occupancy import FREE, OCCUPIED, UNKNOWN
from .world import BEAM_SPACING, DT, OMEGA_MAX, R_MAX, V_MAX, clearance_mask, wrap_angle

SQRT2 = math.sqrt(2.0)
# (di, dj) in counter-clockwise order starting at +x; the bearing of (di, dj)
# is atan2(di, dj) because rows grow with y.
DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
DIRECTION_ANGLES = np.array([math.atan2(di, dj) for di, dj in DIRECTIONS])


def frontier_cells(classmap):
    """FREE cells 8-adjacent to at least one UNKNOWN cell (boolean mask)."""
    unknown = classmap == UNKNOWN
    near = ndimage.binary_dilation(unknown, structure=np.ones((3, 3), bool))
    return (classmap == FREE) & near


def traversable_cells(classmap, clearance=0.0):
    """FREE cells at least ``clearance`` cells (robot radius) from OCCUPIED."""
    free = classmap == FREE
    if clearance <= 0:
        return free
    return free & clearance_mask(classmap != OCCUPIED, clearance)


def exploration_targets(classmap, clearance=0.0):
    """Frontier cells the robot centre can actually stand on."""
    return frontier_cells(classmap) & traversable_cells(classmap, clearance)


@njit(cache=True)
def _relax(trav, src, c_ax, c_dg, tol):
    h, w = trav.shape
    ax = np.full((h, w), -1, np.int64)
    dg = np.full((h, w), -1, np.int64)
    val = np.full((h, w), np.inf)
    for i in range(h):
        for j in range(w):
            if src[i, j]:
                ax[i, j] = 0
                dg[i, j] = 0
                val[i, j] = 0.0
    sweeps = 0
    while True:
        changed = False
        for direction in range(2):
            for a in range(h):
                i = a if direction == 0 else h - 1 - a
                for b in range(w):
                    j = b if direction == 0 else w - 1 - b
                    if not trav[i, j] or src[i, j]:
                        continue
                    for di in range(-1, 2):
                        ni = i + di
                        if ni < 0 or ni >= h:
                            continue
                        for dj in range(-1, 2):
                            nj = j + dj
                            if (di == 0 and dj == 0) or nj < 0 or nj >= w:
                                continue
                            if not trav[ni, nj] or ax[ni, nj] < 0:
                                continue
                            if di != 0 and dj != 0:
                                na, nd = ax[ni, nj], dg[ni, nj] + 1
                            else:
                                na, nd = ax[ni, nj] + 1, dg[ni, nj]
                            cand = na * c_ax + nd * c_dg
                            if cand < val[i, j] - tol:
                                val[i, j] = cand
                                ax[i, j] = na
                                dg[i, j] = nd
                                changed = True
            sweeps += 1
        if not changed:
            break
    return val, sweeps


def compute_cost_matrix(classmap, clearance=0.0, axial=1.0, diagonal=SQRT2):
    """Travel cost from every cell to the nearest frontier.

    Gauss-Seidel raster/anti-raster sweeps until nothing changes. Costs are
    accumulated as exact (axial, diagonal) step counts, so a finite entry is
    always ``n_axial * axial + n_diagonal * diagonal`` for its cheapest route.
    Frontier cells are 0; OCCUPIED, UNKNOWN and cut-off cells are ``inf``.
    """
    trav = traversable_cells(classmap, clearance)
    src = frontier_cells(classmap)
    # Only frontier cells the robot can stand on seed the propagation.
    val, _ = _relax(trav, src & trav, float(axial), float(diagonal), 1e-9)
    val[src] = 0.0
    return val


def score_directions(cost, cell, heading, scan, w_c=1.0, w_h=0.3, w_o=2.0):
    """Blend score for each of the 8 neighbour directions (``-inf`` where the
    neighbour cost is infinite)."""
    i, j = cell
    h, w = cost.shape
    here = cost[i, j]
    scores = np.full(8, -np.inf)
    for k, (di, dj) in enumerate(DIRECTIONS):
        ni, nj = i + di, j + dj
        if not (0 <= ni < h and 0 <= nj < w) or not np.isfinite(cost[ni, nj]):
            continue
        rel = wrap_angle(DIRECTION_ANGLES[k] - heading)
        proximity = max(0.0, 1.0 - sector_min(scan, rel) / R_MAX)
        scores[k] = w_c * (here - cost[ni, nj]) + w_h * math.cos(rel) - w_o * proximity
    return scores


def _rank(scores, heading):
    turns = np.abs(wrap_angle(DIRECTION_ANGLES - heading))
    order = sorted(range(8), key=lambda k: (-scores[k], turns[k], k))
    return [k for k in order if np.isfinite(scores[k])]


ALIGNED = 0.5 * BEAM_SPACING


def choose_direction(cost, state, scan, cell_size, w_c=1.0, w_h=0.3, w_o=2.0,
                     stop_distance=0.04, v_max=V_MAX, omega_max=OMEGA_MAX, dt=DT, commit=None):
    """Like ``exploration_direction`` but also returns the chosen direction
    index (None when no direction qualifies) as ``(k, v, omega)``.

    ``commit`` is a direction the robot is already rotating towards; it is
    kept while its neighbour cost is finite and its sector is clear, which
    stops the heading term from flipping the choice on every turn step.
    """
    cell = (int(state.y // cell_size), int(state.x // cell_size))
    if not np.isfinite(cost[cell]):
        raise ValueError("robot cell has no finite cost")
    scores = score_directions(cost, cell, state.heading, scan, w_c, w_h, w_o)
    if commit is not None and np.isfinite(scores[commit]):
        err = wrap_angle(DIRECTION_ANGLES[commit] - state.heading)
        if sector_min(scan, err) >= stop_distance:
            v, omega = steer(err, v_max, omega_max, dt)
            return commit, *govern(v, omega, scan, state.radius, dt)
    ranked = _rank(scores, state.heading)
    for rank, k in enumerate(ranked):
        err = wrap_angle(DIRECTION_ANGLES[k] - state.heading)
        if sector_min(scan, err) >= stop_distance:
            v, omega = steer(err, v_max, omega_max, dt)
            if rank > 0 and abs(err) > ALIGNED:
                return k, 0.0, omega
            return k, *govern(v, omega, scan, state.radius, dt)
    return None, 0.0, omega_max


def exploration_direction(cost, state, scan, cell_size, w_c=1.0, w_h=0.3, w_o=2.0,
                          stop_distance=0.04, v_max=V_MAX, omega_max=OMEGA_MAX, dt=DT):
    """Velocity command from the cost matrix, current heading and the scan.

    Ties go to the smallest turn. When the best direction's sonar sector reads
    below ``stop_distance`` the command is rotation only, towards the best
    unblocked direction; once aligned with it (within half a beam spacing)
    the robot drives that way.
    """
    _, v, omega = choose_direction(cost, state, scan, cell_size, w_c, w_h, w_o,
                                   stop_distance, v_max, omega_max, dt)
    return v, omega


def nearest_finite(cost, cell, max_radius=12):
    """Closest cell with finite cost within a square window, or None."""
    i, j = cell
    h, w = cost.shape
    best = None
    for r in range(1, max_radius + 1):
        i0, i1, j0, j1 = max(i - r, 0), min(i + r, h - 1), max(j - r, 0), min(j + r, w - 1)
        window = cost[i0:i1 + 1, j0:j1 + 1]
        ii, jj = np.nonzero(np.isfinite(window))
        if ii.size:
            d = (ii + i0 - i) ** 2 + (jj + j0 - j) ** 2
            m = int(np.argmin(d))
            best = (int(ii[m] + i0), int(jj[m] + j0))
            break
    return best


@dataclass
class VIController:
    """Closed-loop wrapper: rebuilds the cost matrix every ``rebuild_every``
    steps and converts it to velocity commands."""

    cell_size: float
    clearance: float
    w_c: float = 1.0
    w_h: float = 0.3
    w_o: float = 2.0
    stop_distance: float = 0.04
    rebuild_every: int = 10
    cost: np.ndarray | None = None
    plan_times: list = field(default_factory=list)
    _last_build: int = -10**9
    _commit: int | None = None

    def rebuild(self, classmap):
        t0 = time.perf_counter()
        self.cost = compute_cost_matrix(classmap, self.clearance)
        self.plan_times.append(time.perf_counter() - t0)

    def step(self, step, state, scan, classmap):
        v, omega = self._command(step, state, scan, classmap)
        return guard(v, omega, state, scan, classmap == OCCUPIED, self.cell_size)

    def _command(self, step, state, scan, classmap):
        if self.cost is None or step - self._last_build >= self.rebuild_every:
            self.rebuild(classmap)
            self._last_build = step
        cell = (int(state.y // self.cell_size), int(state.x // self.cell_size))
        if np.isfinite(self.cost[cell]):
            k, v, omega = choose_direction(self.cost, state, scan, self.cell_size, self.w_c,
                                           self.w_h, self.w_o, self.stop_distance,
                                           commit=self._commit)
            # hold a turn-in-place target until aligned with it
            self._commit = k if v == 0.0 and omega != 0.0 else None
            return v, omega
        self._commit = None
        # Off the traversable set (inflated map edge): head for the closest
        # finite cell; with none around, fall back to plain wandering.
        target = nearest_finite(self.cost, cell)
        if target is None:
            return normal_move(scan, state)
        ty, tx = (target[0] + 0.5) * self.cell_size, (target[1] + 0.5) * self.cell_size
        err = wrap_angle(math.atan2(ty - state.y, tx - state.x) - state.heading)
        if sector_min(scan, err) < self.stop_distance:
            return normal_move(scan, state)
        v, omega = steer(err)
        return govern(v, omega, scan, state.radius)
