"""Small steering helpers shared by the controllers."""

from __future__ import annotations

import math

import numpy as np

from .world import (BEAM_SPACING, DT, N_BEAMS, OMEGA_MAX, R_MAX, ROBOT_RADIUS, V_MAX, _disc_hits,
                    wrap_angle)

TURN_IN_PLACE = math.radians(30.0)
SAFETY_GAP = 0.002


def forward_clearance(scan, radius=ROBOT_RADIUS, direction=0.0):
    """How far the robot can translate along ``direction`` (relative to its
    heading) before its disc touches any echo point of ``scan``. Returns
    ``inf`` when nothing blocks the way."""
    best = math.inf
    for k in range(N_BEAMS):
        r = scan[k]
        if r >= R_MAX:
            continue
        phi = k * BEAM_SPACING - direction
        px = (radius + r) * math.cos(phi)
        py = (radius + r) * math.sin(phi)
        if px <= 0.0 or abs(py) >= radius:
            continue
        best = min(best, px - math.sqrt(radius * radius - py * py))
    return best


def sector_min(scan, direction, half_width=math.radians(15.0) + 1e-9):
    """Smallest reading among beams within ``half_width`` of ``direction``
    (relative to the robot heading)."""
    rel = np.abs(wrap_angle(BEAM_SPACING * np.arange(N_BEAMS) - direction))
    return float(np.min(np.asarray(scan)[rel <= half_width]))


def steer(err, v_max=V_MAX, omega_max=OMEGA_MAX, dt=DT, turn_in_place=TURN_IN_PLACE):
    """Turn towards a bearing error; drive only when roughly aligned."""
    omega = float(np.clip(err / dt, -omega_max, omega_max))
    if abs(err) > turn_in_place:
        return 0.0, omega
    return v_max, omega


def govern(v, omega, scan, radius=ROBOT_RADIUS, dt=DT):
    """Cap forward speed so the next step stops short of the nearest echo."""
    if v <= 0.0:
        return v, omega
    room = forward_clearance(scan, radius) - SAFETY_GAP
    return max(0.0, min(v, room / dt)), omega


def chord(v, omega, heading, dt=DT):
    """Length and bearing of the straight displacement of one unicycle step."""
    if abs(omega) > 1e-12:
        length = 2.0 * v / omega * math.sin(0.5 * omega * dt)
    else:
        length = v * dt
    return length, heading + 0.5 * omega * dt


def _free_fraction(occupied, cell_size, x, y, dx, dy, r):
    # Largest t in [0, 1] such that the disc stays off ``occupied`` on [0, t].
    n = max(2, int(math.ceil(math.hypot(dx, dy) / (cell_size / 8.0))))
    lo = 0.0
    for k in range(1, n + 1):
        t = k / n
        if _disc_hits(occupied, cell_size, x + t * dx, y + t * dy, r):
            hi = t
            for _ in range(20):
                m = 0.5 * (lo + hi)
                if _disc_hits(occupied, cell_size, x + m * dx, y + m * dy, r):
                    hi = m
                else:
                    lo = m
            return lo
        lo = t
    return 1.0


def _without_overlap(occupied, cell_size, x, y, r):
    out = occupied.copy()
    h, w = out.shape
    for i in range(max(int((y - r) // cell_size), 0), min(int((y + r) // cell_size), h - 1) + 1):
        for j in range(max(int((x - r) // cell_size), 0), min(int((x + r) // cell_size), w - 1) + 1):
            px = min(max(x, j * cell_size), (j + 1) * cell_size)
            py = min(max(y, i * cell_size), (i + 1) * cell_size)
            if (px - x) ** 2 + (py - y) ** 2 < r * r:
                out[i, j] = False
    return out


def room_along(bearing, length, state, scan, occupied=None, cell_size=None, gap=SAFETY_GAP):
    """How far (up to ``length``) the robot may move along the absolute
    ``bearing`` keeping ``gap`` from echo points and ``occupied`` cells."""
    allowed = min(length, forward_clearance(scan, state.radius,
                                            wrap_angle(bearing - state.heading)) - gap)
    if occupied is not None and allowed > 0.0:
        r = state.radius + gap
        if _disc_hits(occupied, cell_size, state.x, state.y, r):
            occupied = _without_overlap(occupied, cell_size, state.x, state.y, r)
        t = _free_fraction(occupied, cell_size, state.x, state.y,
                           length * math.cos(bearing), length * math.sin(bearing), r)
        allowed = min(allowed, t * length)
    return max(0.0, allowed)


def guard(v, omega, state, scan, occupied=None, cell_size=None, dt=DT, gap=SAFETY_GAP):
    """Scale the forward speed down so this step's displacement keeps ``gap``
    from every echo point and from every cell of ``occupied`` (the robot's
    own belief). Cells the enlarged disc already overlaps are ignored so the
    robot can always back off from them."""
    if v <= 0.0:
        return v, omega
    length, bearing = chord(v, omega, state.heading, dt)
    if length <= 0.0:
        return v, omega
    allowed = room_along(bearing, length, state, scan, occupied, cell_size, gap)
    return v * allowed / length, omega


def open_bearing(want, state, scan, occupied=None, cell_size=None, v=V_MAX, dt=DT,
                 step=math.radians(15.0), need=0.5):
    """Bearing closest to ``want`` (in ``step`` increments, ties to the left)
    along which at least ``need`` of a full straight step is free; None if
    every direction is blocked."""
    length = v * dt
    for k in range(int(round(math.pi / step)) + 1):
        for sign in ((1,) if k == 0 else (1, -1)):
            b = wrap_angle(want + sign * k * step)
            if room_along(b, length, state, scan, occupied, cell_size) >= need * length:
                return b
    return None


FRONT_HALF_WIDTH = math.radians(30.0) + 1e-9
CLEAR_AHEAD = 0.05


def normal_move(scan, state, turning=0, clear_ahead=CLEAR_AHEAD,
                v_max=V_MAX, omega_max=OMEGA_MAX, dt=DT):
    """Reactive wandering: straight ahead while the front sector is clear,
    otherwise rotate in place away from the nearer side.

    ``turning`` is the sign of a rotation already in progress (0 if none);
    keeping it avoids dithering between left and right in a corner. On an
    exact left/right tie the robot turns left (positive angular speed).
    """
    scan = np.asarray(scan)
    front = sector_min(scan, 0.0, FRONT_HALF_WIDTH)
    if front > clear_ahead and forward_clearance(scan, state.radius) > clear_ahead:
        return govern(v_max, 0.0, scan, state.radius, dt)
    if turning:
        return 0.0, math.copysign(omega_max, turning)
    left = float(np.sum(scan[1:7]))
    right = float(np.sum(scan[N_BEAMS - 6:]))
    return 0.0, omega_max if left >= right else -omega_max
