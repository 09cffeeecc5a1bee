"""Binary PGM/PPM exports of every pipeline stage."""

from __future__ import annotations

import numpy as np

from .occupancy import FREE, OCCUPIED, UNKNOWN

STAGES = ("grid", "classmap", "cost", "skeleton", "graph")


def pgm_bytes(img):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def ppm_bytes(rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def read_pnm(data):
    """Parse the PGM/PPM bytes written by this module."""
    magic, dims, maxval, rest = data.split(b"\n", 3)
    w, h = map(int, dims.split())
    channels = {b"P5": 1, b"P6": 3}[magic]
    arr = np.frombuffer(rest, dtype=np.uint8)
    return arr.reshape((h, w, channels)) if channels == 3 else arr.reshape((h, w))


def grid_image(grid):
    """round(255 * P(occ)); never-observed cells are 127."""
    img = np.rint(255.0 * grid.probability()).astype(np.uint8)
    img[~grid.observed] = 127
    return img


def classmap_image(classmap):
    img = np.empty(classmap.shape, dtype=np.uint8)
    img[classmap == FREE] = 255
    img[classmap == UNKNOWN] = 127
    img[classmap == OCCUPIED] = 0
    return img


def cost_image(cost):
    """Finite costs scaled to 1..255, infinite cells 0."""
    img = np.zeros(cost.shape, dtype=np.uint8)
    finite = np.isfinite(cost)
    if finite.any():
        top = cost[finite].max()
        scaled = cost[finite] / top if top > 0 else np.zeros(finite.sum())
        img[finite] = (1 + np.rint(254.0 * scaled)).astype(np.uint8)
    return img


def skeleton_image(shape_img, skel):
    img = np.zeros(np.shape(shape_img), dtype=np.uint8)
    img[np.asarray(shape_img) != 0] = 80
    img[np.asarray(skel) != 0] = 255
    return img


def _line(a, b):
    # Bresenham between two (i, j) cells.
    (i0, j0), (i1, j1) = a, b
    di, dj = abs(i1 - i0), -abs(j1 - j0)
    si, sj = (1 if i0 < i1 else -1), (1 if j0 < j1 else -1)
    err = di + dj
    out = []
    while True:
        out.append((i0, j0))
        if (i0, j0) == (i1, j1):
            return out
        e2 = 2 * err
        if e2 >= dj:
            err += dj
            i0 += si
        if e2 <= di:
            err += di
            j0 += sj


def graph_image(build, classmap):
    """Colour overlay: free space light grey, explored shape grey, skeleton
    dim blue, edges red, nodes as 3x3 yellow dots."""
    h, w = classmap.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[classmap == FREE] = (200, 200, 200)
    rgb[classmap == UNKNOWN] = (60, 60, 60)
    rgb[build.image != 0] = (150, 150, 150)
    rgb[build.skeleton != 0] = (90, 90, 170)
    g = build.graph
    for e in sorted(g.edges.values(), key=lambda e: e.id):
        for p in _line(g.nodes[e.u].ij, g.nodes[e.v].ij):
            rgb[p] = (220, 30, 30)
    for n in g.nodes.values():
        i, j = n.ij
        rgb[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2] = (255, 220, 0)
    return rgb
