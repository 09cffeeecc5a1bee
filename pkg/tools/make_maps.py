"""Regenerate the bundled map files under src/topoexplore/maps/.

Usage: python3 tools/make_maps.py
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "topoexplore" / "maps"


def blank(n, wall=2):
    occ = np.zeros((n, n), dtype=bool)
    occ[:wall, :] = occ[-wall:, :] = True
    occ[:, :wall] = occ[:, -wall:] = True
    return occ


def disc(occ, ci, cj, r, value=True):
    ii, jj = np.ogrid[:occ.shape[0], :occ.shape[1]]
    occ[(ii - ci) ** 2 + (jj - cj) ** 2 <= r * r] = value


def to_text(occ, start, cell_mm):
    rows = []
    for i, row in enumerate(occ):
        chars = ["#" if v else "." for v in row]
        if i == start[0]:
            chars[start[1]] = "R"
        rows.append("".join(chars))
    return f"cellsize_mm={cell_mm}\n" + "\n".join(rows) + "\n"


def open_room():
    occ = blank(113)
    for ci, cj, r in ((30, 35, 6), (75, 28, 7), (45, 80, 8), (85, 85, 6), (60, 55, 5)):
        disc(occ, ci, cj, r)
    return occ, (100, 56), 8.8


def radial_maze():
    n = 108
    occ = np.ones((n, n), dtype=bool)
    c = (n - 1) / 2.0
    disc(occ, c, c, 20, False)
    ii, jj = np.mgrid[:n, :n]
    for k in range(8):
        a = k * np.pi / 4
        dy, dx = np.sin(a), np.cos(a)
        # perpendicular distance to the arm's axis, along the arm only
        along = (jj - c) * dx + (ii - c) * dy
        across = np.abs(-(jj - c) * dy + (ii - c) * dx)
        occ[(along > 0) & (along < 50) & (across <= 6)] = False
    occ[:2, :] = occ[-2:, :] = True
    occ[:, :2] = occ[:, -2:] = True
    return occ, (int(c), int(c)), 13.9


def maze(cells=6, seed=7):
    n, wall = 170, 2
    pitch = (n - wall) // cells
    occ = np.zeros((n, n), dtype=bool)
    for k in range(cells + 1):
        p = min(k * pitch, n - wall)
        occ[p:p + wall, :] = True
        occ[:, p:p + wall] = True
    occ[-wall:, :] = True
    occ[:, -wall:] = True
    rng = random.Random(seed)
    seen = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        r, c = stack[-1]
        nbrs = [(r + dr, c + dc) for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0))
                if 0 <= r + dr < cells and 0 <= c + dc < cells and (r + dr, c + dc) not in seen]
        if not nbrs:
            stack.pop()
            continue
        nr, nc = rng.choice(nbrs)
        # open the wall between (r, c) and (nr, nc)
        if nr != r:
            p = max(r, nr) * pitch
            occ[p:p + wall, c * pitch + wall:(c + 1) * pitch] = False
        else:
            p = max(c, nc) * pitch
            occ[r * pitch + wall:(r + 1) * pitch, p:p + wall] = False
        seen.add((nr, nc))
        stack.append((nr, nc))
    h = pitch // 2 + 1
    return occ, (h, h), 8.8


def office():
    n = 170
    occ = blank(n)
    # horizontal corridor rows 72..97, rooms above and below
    occ[70:72, :] = True
    occ[98:100, :] = True
    for j in (42, 85, 128):
        occ[:72, j:j + 2] = True
        occ[98:, j:j + 2] = True
    doors = (12, 55, 98, 141)
    for d in doors:
        occ[70:72, d:d + 16] = False
        occ[98:100, d + 6:d + 22] = False
    # a cabinet inside two rooms
    occ[20:30, 60:72] = True
    occ[130:150, 100:108] = True
    return occ, (85, 10), 8.8


def aaai():
    n = 154
    occ = blank(n)
    # outer ring corridor with an inner block split into two rooms
    occ[34:120, 34:36] = True
    occ[34:120, 118:120] = True
    occ[34:36, 34:120] = True
    occ[118:120, 34:120] = True
    occ[34:120, 76:78] = True
    occ[34:36, 48:64] = False  # doors into the rooms
    occ[118:120, 92:108] = False
    occ[70:86, 76:78] = False
    # small rooms along the outer wall
    occ[2:18, 70:72] = True
    occ[136:, 50:52] = True
    occ[136:, 100:102] = True
    for ci, cj, r in ((60, 55, 5), (95, 98, 5), (15, 120, 4)):
        disc(occ, ci, cj, r)
    return occ, (17, 17), 8.8


MAPS = {"open_room": open_room, "radial_maze": radial_maze, "maze": maze,
        "office": office, "aaai": aaai}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in MAPS.items():
        occ, start, cell_mm = fn()
        (OUT / f"{name}.txt").write_text(to_text(occ, start, cell_mm), encoding="utf-8")
        print(f"{name}: {occ.shape[0]}x{occ.shape[1]} free={int((~occ).sum())}")


if __name__ == "__main__":
    main()
