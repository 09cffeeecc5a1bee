"""Bayesian occupancy grid fed by the sonar ring.

Beliefs are stored as log-odds so repeated evidence is a plain sum, which
makes the update independent of the order in which scans arrive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .world import N_BEAMS, R_MAX

L_MIN, L_MAX = -10.0, 10.0
P_FREE = 0.30
P_OCC = 0.75
FREE_BELOW = 0.4
OCCUPIED_ABOVE = 0.6
CONE_HALF_ANGLE = math.radians(7.5)
BAND_CELLS = 1.5


class CellClass(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


FREE, OCCUPIED, UNKNOWN = CellClass.FREE, CellClass.OCCUPIED, CellClass.UNKNOWN


@dataclass(eq=False)
class OccupancyGrid:
    logodds: np.ndarray
    observed: np.ndarray
    cell_size: float

    @classmethod
    def empty(cls, height, width, cell_size):
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool), cell_size)

    @classmethod
    def like(cls, world):
        return cls.empty(world.height, world.width, world.cell_size)

    @property
    def shape(self):
        return self.logodds.shape

    def probability(self):
        return 1.0 / (1.0 + np.exp(-self.logodds))

    def copy(self):
        return OccupancyGrid(self.logodds.copy(), self.observed.copy(), self.cell_size)


@njit(cache=True)
def _beam_cells(reading, ox, oy, angle, half, cs, h, w, r_max, p_free, p_occ, band):
    # Cells are taken if their centre lies in the cone or the beam axis crosses
    # them. Probabilities are tapered towards 0.5 at the cone edge.
    dx = math.cos(angle)
    dy = math.sin(angle)
    echo = reading < r_max
    reach = reading + band if echo else reading
    i0 = max(int(math.floor((oy - reach) / cs)), 0)
    i1 = min(int(math.floor((oy + reach) / cs)), h - 1)
    j0 = max(int(math.floor((ox - reach) / cs)), 0)
    j1 = min(int(math.floor((ox + reach) / cs)), w - 1)
    n_max = max((i1 - i0 + 1) * (j1 - j0 + 1), 0)
    ii = np.empty(n_max, np.int64)
    jj = np.empty(n_max, np.int64)
    pp = np.empty(n_max)
    axis_halfwidth = 0.5 * cs * (abs(dx) + abs(dy))
    n = 0
    for i in range(i0, i1 + 1):
        cy = (i + 0.5) * cs - oy
        for j in range(j0, j1 + 1):
            cx = (j + 0.5) * cs - ox
            along = cx * dx + cy * dy
            if along <= 0.0:
                continue
            d = math.sqrt(cx * cx + cy * cy)
            if d > reach:
                continue
            across = cx * dy - cy * dx
            off = abs(math.atan2(across, along))
            if abs(across) <= axis_halfwidth:
                weight = 1.0
            elif off <= half and half > 0.0:
                weight = 1.0 - (off / half) ** 2
            else:
                continue
            if echo:
                if d < reading - band:
                    p = p_free
                elif d < reading:
                    p = p_free + (p_occ - p_free) * (d - (reading - band)) / band
                else:
                    p = p_occ
            else:
                p = p_free
            ii[n] = i
            jj[n] = j
            pp[n] = 0.5 + weight * (p - 0.5)
            n += 1
    return ii[:n], jj[:n], pp[:n]


@njit(cache=True)
def _integrate(logodds, observed, ranges, x, y, heading, r, cs, half,
               r_max, p_free, p_occ, band, l_min, l_max):
    h, w = logodds.shape
    nb = ranges.shape[0]
    for k in range(nb):
        a = heading + k * (2.0 * math.pi / nb)
        ox = x + r * math.cos(a)
        oy = y + r * math.sin(a)
        ii, jj, pp = _beam_cells(ranges[k], ox, oy, a, half, cs, h, w, r_max, p_free, p_occ, band)
        for m in range(ii.shape[0]):
            l = logodds[ii[m], jj[m]] + math.log(pp[m] / (1.0 - pp[m]))
            logodds[ii[m], jj[m]] = min(max(l, l_min), l_max)
            observed[ii[m], jj[m]] = True


def inverse_sensor_model(reading, origin, angle, cell_size, shape,
                         half_angle=CONE_HALF_ANGLE, r_max=R_MAX):
    """Evidence cells for one beam.

    ``origin`` is the sensor position (on the robot edge) in metres. Returns
    ``(rows, cols, p)`` arrays; ``p`` is the conditional occupancy probability.
    """
    if not 0.0 <= reading <= r_max:
        raise ValueError(f"reading {reading} outside [0, {r_max}]")
    ox, oy = origin
    return _beam_cells(float(reading), float(ox), float(oy), float(angle), float(half_angle),
                       float(cell_size), shape[0], shape[1], float(r_max),
                       P_FREE, P_OCC, BAND_CELLS * cell_size)


def apply_evidence(grid, rows, cols, p):
    """Add per-cell evidence (probabilities) to the grid in log-odds."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    p = np.asarray(p, dtype=float)
    upd = np.log(p / (1.0 - p))
    np.add.at(grid.logodds, (rows, cols), upd)
    np.clip(grid.logodds, L_MIN, L_MAX, out=grid.logodds)
    grid.observed[rows, cols] = True
    return grid


def integrate_scan(grid, state, scan, half_angle=CONE_HALF_ANGLE):
    """Fuse a 24-beam scan taken at ``state`` into ``grid`` (in place)."""
    scan = np.asarray(scan, dtype=float)
    if scan.shape != (N_BEAMS,):
        raise ValueError(f"expected {N_BEAMS} ranges, got shape {scan.shape}")
    h, w = grid.shape
    if not (0.0 <= state.x < w * grid.cell_size and 0.0 <= state.y < h * grid.cell_size):
        raise ValueError(f"pose ({state.x:.3f}, {state.y:.3f}) outside the grid")
    _integrate(grid.logodds, grid.observed, scan, float(state.x), float(state.y),
               float(state.heading), float(state.radius), float(grid.cell_size),
               float(half_angle), R_MAX, P_FREE, P_OCC, BAND_CELLS * grid.cell_size, L_MIN, L_MAX)
    return grid


def mark_footprint(grid, state, p=P_FREE):
    """Free evidence for the cells under the robot body; the sonars can't see them."""
    cs = grid.cell_size
    h, w = grid.shape
    r = state.radius
    i0, i1 = max(int((state.y - r) // cs), 0), min(int((state.y + r) // cs), h - 1)
    j0, j1 = max(int((state.x - r) // cs), 0), min(int((state.x + r) // cs), w - 1)
    ii, jj = np.mgrid[i0:i1 + 1, j0:j1 + 1]
    inside = ((jj + 0.5) * cs - state.x) ** 2 + ((ii + 0.5) * cs - state.y) ** 2 <= r * r
    if inside.any():
        apply_evidence(grid, ii[inside], jj[inside], np.full(inside.sum(), p))
    return grid


def classify(grid):
    """Per-cell FREE / OCCUPIED / UNKNOWN as a uint8 array of ``CellClass``."""
    p = grid.probability()
    out = np.full(grid.shape, UNKNOWN, dtype=np.uint8)
    out[grid.observed & (p <= FREE_BELOW)] = FREE
    out[p >= OCCUPIED_ABOVE] = OCCUPIED
    return out


def ground_truth_classmap(world):
    return np.where(world.occupied, OCCUPIED, FREE).astype(np.uint8)


def coverage(classmap, world, reachable=None):
    """Fraction of reachable free cells the map marks FREE."""
    if classmap.shape != world.occupied.shape:
        raise ValueError(f"classmap shape {classmap.shape} != world shape {world.occupied.shape}")
    if reachable is None:
        reachable = world.reachable()
    total = int(reachable.sum())
    if total == 0:
        return 0.0
    return int(np.count_nonzero((classmap == FREE) & reachable)) / total
