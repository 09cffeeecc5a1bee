import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topoexplore.world import load_world  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def room_text(h, w, cell_mm=8.8, start=None, blocks=()):
    """A closed rectangular room; ``blocks`` are (i0, i1, j0, j1) wall boxes."""
    occ = np.zeros((h, w), bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    for i0, i1, j0, j1 in blocks:
        occ[i0:i1, j0:j1] = True
    si, sj = start if start is not None else (h // 2, w // 2)
    rows = []
    for i in range(h):
        chars = ["#" if occ[i, j] else "." for j in range(w)]
        if i == si:
            chars[sj] = "R"
        rows.append("".join(chars))
    return f"cellsize_mm={cell_mm}\n" + "\n".join(rows) + "\n"


def room(h, w, **kw):
    return load_world(room_text(h, w, **kw))


@pytest.fixture
def small_room():
    return room(40, 40)


def blob_image(rng, h=24, w=24):
    """Union of random rectangles and discs, or a smoothed noise field."""
    img = np.zeros((h, w), np.uint8)
    if rng.random() < 0.5:
        ii, jj = np.mgrid[:h, :w]
        for _ in range(int(rng.integers(1, 6))):
            if rng.random() < 0.5:
                i0, j0 = rng.integers(1, h - 2, 2)
                i1, j1 = i0 + rng.integers(1, h // 2), j0 + rng.integers(1, w // 2)
                img[i0:i1, j0:j1] = 1
            else:
                ci, cj, r = rng.integers(2, h - 2), rng.integers(2, w - 2), rng.uniform(1, 7)
                img[(ii - ci) ** 2 + (jj - cj) ** 2 <= r * r] = 1
    else:
        noise = rng.random((h, w))
        smooth = sum(np.roll(np.roll(noise, a, 0), b, 1) for a in (-1, 0, 1) for b in (-1, 0, 1))
        img = (smooth > rng.uniform(3.8, 5.2)).astype(np.uint8)
    img[0, :] = img[-1, :] = img[:, 0] = img[:, -1] = 0
    return img


VERDICTS = {}


@pytest.fixture
def verdict(request):
    """Record PASS/FAIL for an acceptance criterion named by the test's
    ``criterion`` marker; the lines are printed in the terminal summary."""
    label = request.node.get_closest_marker("criterion").args[0]
    result = {"ok": False}
    yield result
    VERDICTS[label] = "PASS" if result["ok"] else "FAIL"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(VERDICTS):
        terminalreporter.write_line(f"{VERDICTS[label]} {label}")
