"""Iterative thinning of the explored free space to a one-pixel skeleton.

Neighbour labelling around a pixel P1, counter-clockwise from the top::

    P3 P2 P9
    P4 P1 P8
    P5 P6 P7

A pass evaluates every test on the pre-pass image and then deletes all
qualifying pixels at once. Simultaneous deletion wipes out an isolated 2x2
block entirely, so by default a pass keeps the last pixel (raster order) of
any 8-component it would otherwise erase.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .occupancy import FREE
from .world import clearance_mask

# (di, dj) offsets of P2..P9.
RING_OFFSETS = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def binarize(classmap, clearance=0.0):
    """1 where the cell is FREE with at least ``clearance`` cells to any
    non-FREE cell; the image border is always 0."""
    img = clearance_mask(classmap == FREE, clearance).astype(np.uint8)
    img[0, :] = img[-1, :] = 0
    img[:, 0] = img[:, -1] = 0
    return img


def ring_at(image, i, j):
    """The neighbour ring (P2..P9) of pixel (i, j); outside pixels read 0."""
    h, w = image.shape
    out = []
    for di, dj in RING_OFFSETS:
        a, b = i + di, j + dj
        out.append(int(image[a, b]) if 0 <= a < h and 0 <= b < w else 0)
    return tuple(out)


def z0(ring):
    """Number of 0 -> 1 steps in the cyclic sequence P2, ..., P9, P2."""
    return sum(1 for k in range(8) if ring[k] == 0 and ring[(k + 1) % 8] == 1)


def nz(ring):
    """Number of nonzero neighbours."""
    return sum(1 for v in ring if v)


def z0_map(image):
    """Z0 for every pixel of ``image`` (outside reads as 0)."""
    rings = [r.astype(np.int8) for r in _neighbours(image)]
    out = np.zeros(image.shape, dtype=np.int8)
    for k in range(8):
        out += (rings[k] == 0) & (rings[(k + 1) % 8] == 1)
    return out


def nz_map(image):
    return sum(r.astype(np.int8) for r in _neighbours(image))


def _neighbours(image):
    p = np.pad(image, 1, constant_values=0)
    h, w = image.shape
    return [p[1 + di:1 + di + h, 1 + dj:1 + dj + w] for di, dj in RING_OFFSETS]


def deletable(image, literal=False):
    """Mask of shape pixels meeting all four deletion conditions.

    ``literal=True`` reads the last two conditions as ``Z0 < 1`` instead of
    the usual ``Z0 != 1``.
    """
    img = (np.asarray(image) != 0).astype(np.uint8)
    h, w = img.shape
    # Z0 on a one-pixel margin so Z0(P2) / Z0(P4) exist for every pixel.
    zp = z0_map(np.pad(img, 1))
    z0_here = zp[1:h + 1, 1:w + 1]
    z0_up = zp[0:h, 1:w + 1]
    z0_left = zp[1:h + 1, 0:w]
    p2, _, p4, _, p6, _, p8, _ = _neighbours(img)
    count = nz_map(img)
    if literal:
        up_ok, left_ok = z0_up < 1, z0_left < 1
    else:
        up_ok, left_ok = z0_up != 1, z0_left != 1
    return ((img == 1)
            & (count >= 2) & (count <= 6)
            & (z0_here == 1)
            & (((p2 & p4 & p8) == 0) | up_ok)
            & (((p2 & p4 & p6) == 0) | left_ok))


def _check_border(img):
    if img[0, :].any() or img[-1, :].any() or img[:, 0].any() or img[:, -1].any():
        raise ValueError("image border must be 0")


def _spare_vanishing(img, kill):
    labels, n = ndimage.label(img, structure=np.ones((3, 3), bool))
    if n == 0:
        return kill
    survivors = ndimage.sum_labels(img & ~kill, labels, index=np.arange(1, n + 1))
    for k in np.flatnonzero(survivors == 0) + 1:
        flat = np.flatnonzero(labels.ravel() == k)
        kill.flat[flat[-1]] = False
    return kill


def thin_pass(image, literal=False, keep_components=True):
    """One simultaneous deletion pass. Returns ``(new_image, deletions)``."""
    img = (np.asarray(image) != 0).astype(np.uint8)
    _check_border(img)
    kill = deletable(img, literal)
    if keep_components and kill.any():
        kill = _spare_vanishing(img, kill)
    out = img.copy()
    out[kill] = 0
    return out, int(kill.sum())


def thin(image, literal=False, keep_components=True):
    """Repeat ``thin_pass`` until nothing more is deleted."""
    img = (np.asarray(image) != 0).astype(np.uint8)
    _check_border(img)
    while True:
        img, deletions = thin_pass(img, literal, keep_components)
        if deletions == 0:
            return img


_N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _components(cells, steps):
    cells = set(cells)
    count = 0
    while cells:
        count += 1
        todo = [cells.pop()]
        while todo:
            a, b = todo.pop()
            for da, db in steps:
                n = (a + da, b + db)
                if n in cells:
                    cells.remove(n)
                    todo.append(n)
    return count


def is_simple(image, i, j):
    """True if removing pixel (i, j) changes neither the 8-connected shape
    nor the 4-connected background topology in its 3x3 window."""
    fg, bg = [], []
    for di, dj in _N8:
        a, b = i + di, j + dj
        inside = 0 <= a < image.shape[0] and 0 <= b < image.shape[1]
        (fg if inside and image[a, b] else bg).append((di, dj))
    if _components(fg, _N8) != 1:
        return False
    four = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    touching = [c for c in bg if c in four]
    if not touching:
        return False
    # background components (4-connected, inside the window) that touch P
    bgset = set(bg)
    seen, count = set(), 0
    for start in touching:
        if start in seen:
            continue
        count += 1
        todo = [start]
        seen.add(start)
        while todo:
            a, b = todo.pop()
            for da, db in four:
                n = (a + da, b + db)
                if n in bgset and n not in seen:
                    seen.add(n)
                    todo.append(n)
    return count == 1


def remove_staircases(skel):
    """Drop corner pixels of 4-connected steps so diagonal runs become plain
    8-connected paths. Only simple points are removed, in raster order, so the
    skeleton topology is unchanged and every remaining run pixel has exactly
    two neighbours."""
    sk = (np.asarray(skel) != 0).astype(np.uint8)
    corners = ((-1, 0, 0, -1), (0, -1, 1, 0), (1, 0, 0, 1), (0, 1, -1, 0))
    changed = True
    while changed:
        changed = False
        for i, j in zip(*np.nonzero(sk)):
            ring = ring_at(sk, i, j)
            if nz(ring) < 2:
                continue
            corner = any(sk[i + a, j + b] and sk[i + c, j + d] for a, b, c, d in corners)
            if corner and is_simple(sk, i, j):
                sk[i, j] = 0
                changed = True
    return sk
