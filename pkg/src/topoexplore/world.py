"""Simulated world: obstacle bitmap, differential-drive robot and a sonar ring.

Coordinates are metric with the origin at the top-left corner of the map.
Cell ``(i, j)`` (row, column) covers ``x in [j*cs, (j+1)*cs)`` and
``y in [i*cs, (i+1)*cs)``. Headings are measured in the (x, y) frame, so a
positive angular speed turns from +x towards +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from numba import njit
from scipy import ndimage

R_MAX = 0.15
N_BEAMS = 24
BEAM_SPACING = 2.0 * math.pi / N_BEAMS
ROBOT_RADIUS = 0.0275
V_MAX = 0.08
OMEGA_MAX = math.pi
DT = 0.1
DEFAULT_CELL_SIZE = 0.0088
NOISE_FRACTION = 0.02

BUNDLED_MAPS = ("open_room", "radial_maze", "maze", "office", "aaai")


class MapFormatError(ValueError):
    """Raised for malformed map documents; carries the offending position."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


def wrap_angle(a):
    """Map an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float = 0.0
    radius: float = ROBOT_RADIUS
    bumped: bool = False  # last translation was cut short by contact


@dataclass(frozen=True, eq=False)
class WorldMap:
    occupied: np.ndarray
    cell_size: float
    start: RobotState

    @property
    def height(self):
        return self.occupied.shape[0]

    @property
    def width(self):
        return self.occupied.shape[1]

    @property
    def area(self):
        return self.width * self.height * self.cell_size ** 2

    def cell_of(self, x, y):
        return int(y // self.cell_size), int(x // self.cell_size)

    def radius_cells(self, radius=ROBOT_RADIUS):
        return radius / self.cell_size

    def reachable(self, radius=ROBOT_RADIUS):
        """Cells a robot centre can occupy and reach from the start pose."""
        cached = self.__dict__.get("_reachable")
        if cached is not None and cached[0] == radius:
            return cached[1]
        ok = clearance_mask(~self.occupied, radius / self.cell_size)
        labels, _ = ndimage.label(ok, structure=np.ones((3, 3), bool))
        si, sj = self.cell_of(self.start.x, self.start.y)
        mask = labels == labels[si, sj] if labels[si, sj] else np.zeros_like(ok)
        object.__setattr__(self, "_reachable", (radius, mask))
        return mask


def clearance_mask(free, radius_cells):
    """Cells of ``free`` whose centre is at least ``radius_cells`` (plus half
    a cell) away from any non-free cell. Outside the array counts as non-free."""
    if radius_cells <= 0:
        return free.copy()
    padded = np.pad(free, 1, constant_values=False)
    edt = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return free & (edt >= radius_cells + 0.5)


def load_world(text):
    """Parse a map document.

    The first line is ``cellsize_mm=<number>``; the rest are grid rows made
    of ``#`` (occupied), ``.`` (free) and exactly one ``R`` (start, free).
    """
    lines = text.splitlines()
    if not lines or not any(line.strip() for line in lines):
        raise MapFormatError("empty map document")
    header = lines[0].strip()
    key, sep, value = header.partition("=")
    if not sep or key.strip() != "cellsize_mm":
        raise MapFormatError("expected header 'cellsize_mm=<number>'", line=1)
    try:
        cell_size = float(value) / 1000.0
    except ValueError:
        raise MapFormatError(f"bad cell size {value!r}", line=1) from None
    if not (cell_size > 0 and math.isfinite(cell_size)):
        raise MapFormatError("cell size must be positive", line=1)

    rows = lines[1:]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) < 3:
        raise MapFormatError("map needs at least 3 rows")
    width = len(rows[0])
    if width < 3:
        raise MapFormatError("map needs at least 3 columns", line=2)
    start = None
    occ = np.zeros((len(rows), width), dtype=bool)
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != width:
            raise MapFormatError(
                f"ragged lines: expected {width} characters, found {len(row)}",
                line=lineno, column=min(len(row), width) + 1)
        for j, ch in enumerate(row):
            if ch == "#":
                occ[i, j] = True
            elif ch == "R":
                if start is not None:
                    raise MapFormatError("multiple start cells 'R'", line=lineno, column=j + 1)
                start = (i, j)
            elif ch != ".":
                raise MapFormatError(f"unknown character {ch!r}", line=lineno, column=j + 1)
    if start is None:
        raise MapFormatError("no start cell 'R'")
    h, w = occ.shape
    for i in range(h):
        for j in (0, w - 1) if 0 < i < h - 1 else range(w):
            if not occ[i, j]:
                raise MapFormatError("boundary is not closed", line=i + 2, column=j + 1)
    si, sj = start
    pose = RobotState(x=(sj + 0.5) * cell_size, y=(si + 0.5) * cell_size)
    if _disc_hits(occ, cell_size, pose.x, pose.y, pose.radius):
        raise MapFormatError("start cell has less clearance than the robot radius",
                             line=si + 2, column=sj + 1)
    return WorldMap(occupied=occ, cell_size=cell_size, start=pose)


def load_bundled(name):
    if name not in BUNDLED_MAPS:
        raise FileNotFoundError(f"no bundled map named {name!r}; choose from {', '.join(BUNDLED_MAPS)}")
    text = resources.files("topoexplore").joinpath("maps").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return load_world(text)


def load_map(name_or_path):
    """Bundled map by name, otherwise a path to a map file."""
    if name_or_path in BUNDLED_MAPS:
        return load_bundled(name_or_path)
    with open(name_or_path, encoding="utf-8") as fh:
        return load_world(fh.read())


@njit(cache=True)
def _ray_distance(occ, cs, ox, oy, dx, dy, max_dist):
    # Amanatides-Woo traversal; returns distance to the first occupied cell.
    h, w = occ.shape
    i = int(math.floor(oy / cs))
    j = int(math.floor(ox / cs))
    if i < 0 or j < 0 or i >= h or j >= w or occ[i, j]:
        return 0.0
    big = 1e30
    if dx > 0:
        step_j = 1
        t_max_x = ((j + 1) * cs - ox) / dx
        t_dx = cs / dx
    elif dx < 0:
        step_j = -1
        t_max_x = (j * cs - ox) / dx
        t_dx = -cs / dx
    else:
        step_j = 0
        t_max_x = big
        t_dx = big
    if dy > 0:
        step_i = 1
        t_max_y = ((i + 1) * cs - oy) / dy
        t_dy = cs / dy
    elif dy < 0:
        step_i = -1
        t_max_y = (i * cs - oy) / dy
        t_dy = -cs / dy
    else:
        step_i = 0
        t_max_y = big
        t_dy = big
    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            j += step_j
            t_max_x += t_dx
        else:
            t = t_max_y
            i += step_i
            t_max_y += t_dy
        if t >= max_dist:
            return max_dist
        if i < 0 or j < 0 or i >= h or j >= w or occ[i, j]:
            return t


@njit(cache=True)
def _disc_hits(occ, cs, x, y, r):
    h, w = occ.shape
    i0 = max(int(math.floor((y - r) / cs)), 0)
    i1 = min(int(math.floor((y + r) / cs)), h - 1)
    j0 = max(int(math.floor((x - r) / cs)), 0)
    j1 = min(int(math.floor((x + r) / cs)), w - 1)
    r2 = r * r
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            if occ[i, j]:
                px = min(max(x, j * cs), (j + 1) * cs)
                py = min(max(y, i * cs), (i + 1) * cs)
                if (px - x) ** 2 + (py - y) ** 2 < r2:
                    return True
    return False


@njit(cache=True)
def _scan(occ, cs, x, y, heading, r, max_range, n):
    out = np.empty(n)
    for k in range(n):
        a = heading + k * (2.0 * math.pi / n)
        dx = math.cos(a)
        dy = math.sin(a)
        out[k] = _ray_distance(occ, cs, x + r * dx, y + r * dy, dx, dy, max_range)
    return out


def beam_angles(heading=0.0):
    return heading + BEAM_SPACING * np.arange(N_BEAMS)


def cast_sonar(world, state, beam, noise=0.0):
    """Range of one beam, measured from the robot edge, clamped to ``R_MAX``.

    ``noise`` is the relative perturbation (e.g. drawn from U[-0.02, 0.02]).
    A beam with no echo stays at ``R_MAX``.
    """
    if not 0 <= beam < N_BEAMS:
        raise IndexError(f"beam index {beam} out of range")
    a = state.heading + beam * BEAM_SPACING
    dx, dy = math.cos(a), math.sin(a)
    d = _ray_distance(world.occupied, world.cell_size,
                      state.x + state.radius * dx, state.y + state.radius * dy, dx, dy, R_MAX)
    if noise and d < R_MAX:
        d = min(max(d * (1.0 + noise), 0.0), R_MAX)
    return float(d)


def scan_noise(seed, step):
    """Deterministic relative noise for all beams of one control step."""
    rng = np.random.default_rng([seed, step])
    return rng.uniform(-NOISE_FRACTION, NOISE_FRACTION, N_BEAMS)


def sonar_scan(world, state, noise=None):
    """All 24 ranges. ``noise`` is an optional array of relative perturbations."""
    ranges = _scan(world.occupied, world.cell_size, state.x, state.y, state.heading,
                   state.radius, R_MAX, N_BEAMS)
    if noise is not None:
        echo = ranges < R_MAX
        ranges = np.where(echo, np.clip(ranges * (1.0 + noise), 0.0, R_MAX), ranges)
    return ranges


def overlaps(world, x, y, radius=ROBOT_RADIUS):
    return bool(_disc_hits(world.occupied, world.cell_size, x, y, radius))


def step_robot(world, state, v, omega, dt=DT, v_max=V_MAX, omega_max=OMEGA_MAX):
    """Integrate unicycle kinematics for one step.

    Rotation always succeeds. Translation follows the exact arc chord and is
    truncated at the contact point; ``bumped`` is set when that happens.
    """
    eps = 1e-9
    if abs(v) > v_max + eps or abs(omega) > omega_max + eps:
        raise ValueError(f"command ({v}, {omega}) exceeds limits ({v_max}, {omega_max})")
    if v == 0.0 and omega == 0.0:
        return replace(state, bumped=False)
    mid = state.heading + 0.5 * omega * dt
    if abs(omega) > 1e-12:
        chord = 2.0 * v / omega * math.sin(0.5 * omega * dt)
    else:
        chord = v * dt
    heading = wrap_angle(state.heading + omega * dt)
    if chord == 0.0:
        return replace(state, heading=heading, bumped=False)
    dx, dy = chord * math.cos(mid), chord * math.sin(mid)
    occ, cs, r = world.occupied, world.cell_size, state.radius
    n = max(2, int(math.ceil(abs(chord) / (cs / 8.0))))
    free_t = 0.0
    hit_t = None
    for k in range(1, n + 1):
        t = k / n
        if _disc_hits(occ, cs, state.x + t * dx, state.y + t * dy, r):
            hit_t = t
            break
        free_t = t
    if hit_t is None:
        return replace(state, x=state.x + dx, y=state.y + dy, heading=heading, bumped=False)
    lo, hi = free_t, hit_t
    for _ in range(30):
        m = 0.5 * (lo + hi)
        if _disc_hits(occ, cs, state.x + m * dx, state.y + m * dy, r):
            hi = m
        else:
            lo = m
    return replace(state, x=state.x + lo * dx, y=state.y + lo * dy, heading=heading, bumped=True)
