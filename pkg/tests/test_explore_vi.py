import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import clearance_loop, frontier_loop, grid_dijkstra
from topoexplore.explore_vi import (DIRECTIONS, SQRT2, choose_direction, compute_cost_matrix,
                                    exploration_direction, frontier_cells, nearest_finite,
                                    score_directions, traversable_cells)
from topoexplore.harness import _controller, make_config
from topoexplore.occupancy import (FREE, OCCUPIED, UNKNOWN, OccupancyGrid, classify, coverage,
                                   integrate_scan, mark_footprint)
from topoexplore.world import N_BEAMS, R_MAX, V_MAX, RobotState, load_map, sonar_scan, step_robot

CS = 0.01


def random_classmap(rng, h=None, w=None):
    h = h or int(rng.integers(3, 14))
    w = w or int(rng.integers(3, 14))
    p = rng.dirichlet([3, 1, 1])
    return rng.choice([FREE, OCCUPIED, UNKNOWN], size=(h, w), p=p).astype(np.uint8)


def at(i, j, heading=0.0):
    return RobotState((j + 0.5) * CS, (i + 0.5) * CS, heading)


# ------------------------------------------------------------ frontier

def test_frontier_empty_cases():
    assert not frontier_cells(np.full((5, 5), UNKNOWN, np.uint8)).any()
    assert not frontier_cells(np.full((5, 5), FREE, np.uint8)).any()


def test_frontier_half_plane():
    cm = np.full((6, 5), UNKNOWN, np.uint8)
    cm[3:] = FREE
    f = frontier_cells(cm)
    assert f[3].all() and f.sum() == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_frontier_matches_loop(seed):
    cm = random_classmap(np.random.default_rng(seed))
    assert np.array_equal(frontier_cells(cm), frontier_loop(cm))


# ------------------------------------------------------------ cost matrix

def test_frontier_cells_cost_zero():
    cm = np.full((5, 5), FREE, np.uint8)
    cm[0, 0] = UNKNOWN
    cost = compute_cost_matrix(cm)
    assert np.all(cost[frontier_cells(cm)] == 0.0)


def test_corridor_costs():
    # 1-cell corridor (row 1, columns 1..5), UNKNOWN just past column 5
    cm = np.full((3, 8), OCCUPIED, np.uint8)
    cm[1, 1:6] = FREE
    cm[1, 6] = UNKNOWN
    cost = compute_cost_matrix(cm)
    assert list(cost[1, 5:0:-1]) == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_walled_off_cell_is_inf():
    cm = np.full((5, 9), FREE, np.uint8)
    cm[:, 4] = OCCUPIED
    cm[2, 0] = UNKNOWN
    cost = compute_cost_matrix(cm)
    assert np.isinf(cost[:, 5:]).all()
    assert np.isfinite(cost[:, :4][cm[:, :4] == FREE]).all()
    assert np.isinf(cost[cm == OCCUPIED]).all() and np.isinf(cost[cm == UNKNOWN]).all()


def test_no_frontier_all_inf():
    cm = np.full((6, 6), FREE, np.uint8)
    assert np.isinf(compute_cost_matrix(cm)).all()


def test_cost_matches_dijkstra_on_random_maps():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        cm = random_classmap(rng)
        expected = grid_dijkstra(cm == FREE, frontier_loop(cm))
        assert np.array_equal(compute_cost_matrix(cm), expected)


def test_cost_matches_dijkstra_with_clearance():
    rng = np.random.default_rng(7)
    for _ in range(40):
        cm = random_classmap(rng, 16, 16)
        cm[rng.random(cm.shape) < 0.5] = FREE
        trav = clearance_loop(cm, 1.5)
        assert np.array_equal(traversable_cells(cm, 1.5), trav)
        front = frontier_loop(cm)
        expected = grid_dijkstra(trav, front)
        expected[front] = 0.0
        assert np.array_equal(compute_cost_matrix(cm, 1.5), expected)


def bellman_residual(cost, cm, axial=1.0, diagonal=SQRT2):
    front = frontier_cells(cm)
    trav = cm == FREE
    h, w = cost.shape
    worst = 0.0
    for i, j in zip(*np.nonzero(np.isfinite(cost) & ~front)):
        best = math.inf
        for di, dj in DIRECTIONS:
            a, b = i + di, j + dj
            if 0 <= a < h and 0 <= b < w and trav[a, b]:
                best = min(best, cost[a, b] + (diagonal if di and dj else axial))
        worst = max(worst, abs(cost[i, j] - best))
    return worst


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bellman_fixed_point(seed):
    cm = random_classmap(np.random.default_rng(seed))
    assert bellman_residual(compute_cost_matrix(cm), cm) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_cost_scaling(seed, k):
    cm = random_classmap(np.random.default_rng(seed), 12, 12)
    base = compute_cost_matrix(cm)
    scaled = compute_cost_matrix(cm, axial=k, diagonal=k * SQRT2)
    fin = np.isfinite(base)
    assert np.array_equal(fin, np.isfinite(scaled))
    assert np.allclose(scaled[fin], k * base[fin], rtol=1e-12, atol=1e-12)


# ------------------------------------------------------------ direction

def slope_cost(n=11):
    # cost falls along +x
    return np.tile(np.arange(n, 0, -1, dtype=float), (n, 1))


def test_descending_straight_ahead_full_speed():
    v, om = exploration_direction(slope_cost(), at(5, 5), np.full(N_BEAMS, R_MAX), CS)
    assert v == pytest.approx(V_MAX)
    assert om == 0.0


@pytest.mark.parametrize("heading", [0.0, math.pi / 2, -3 * math.pi / 4])
def test_flat_cost_keeps_heading(heading):
    cost = np.ones((11, 11))
    v, om = exploration_direction(cost, at(5, 5, heading), np.full(N_BEAMS, R_MAX), CS)
    assert v == pytest.approx(V_MAX)
    assert om == 0.0


def test_wall_ahead_rotates_in_place():
    scan = np.full(N_BEAMS, R_MAX)
    scan[[23, 0, 1]] = 0.03
    cost = slope_cost()
    scores = score_directions(cost, (5, 5), 0.0, scan)
    # proximity penalty 2.0 * (1 - 0.03 / 0.15) = 1.6 beats the unit cost drop
    assert 2.0 * (1 - 0.03 / R_MAX) > 1.0
    assert scores[0] < max(scores[1], scores[7])
    v, om = exploration_direction(cost, at(5, 5), scan, CS)
    assert v == 0.0 and om != 0.0


def test_infinite_robot_cell_rejected():
    cost = np.full((5, 5), np.inf)
    with pytest.raises(ValueError):
        exploration_direction(cost, at(2, 2), np.full(N_BEAMS, R_MAX), CS)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0), st.floats(-math.pi, math.pi))
def test_direction_invariant_under_cost_scaling(seed, k, heading):
    rng = np.random.default_rng(seed)
    cm = random_classmap(rng, 12, 12)
    base = compute_cost_matrix(cm)
    cells = np.argwhere(np.isfinite(base))
    if len(cells) == 0:
        return
    i, j = cells[rng.integers(len(cells))]
    scaled = compute_cost_matrix(cm, axial=k, diagonal=k * SQRT2)
    scan = rng.uniform(0.0, R_MAX, N_BEAMS)
    s = at(i, j, heading)
    a = choose_direction(base, s, scan, CS, w_c=1.0)
    b = choose_direction(scaled, s, scan, CS, w_c=1.0 / k)
    assert a[0] == b[0]


def test_nearest_finite():
    cost = np.full((9, 9), np.inf)
    cost[2, 7] = 1.0
    cost[6, 4] = 3.0
    assert nearest_finite(cost, (5, 4)) == (6, 4)
    assert nearest_finite(np.full((5, 5), np.inf), (2, 2)) is None


# ------------------------------------------------------------ closed loop

@pytest.mark.slow
def test_open_room_closed_loop():
    cfg = make_config(map="open_room", controller="vi", seed=1, noise=False)
    world = load_map("open_room")
    reach = world.reachable()
    grid = OccupancyGrid.like(world)
    ctrl = _controller(cfg, world)
    s = world.start
    history = []
    for step in range(20000):
        scan = sonar_scan(world, s)
        integrate_scan(grid, s, scan)
        mark_footprint(grid, s)
        cm = classify(grid)
        history.append(coverage(cm, world, reach))
        if history[-1] >= 0.95:
            break
        s = step_robot(world, s, *ctrl.step(step, s, scan, cm))
        assert not s.bumped
    assert history[-1] >= 0.95
    assert all(b >= a for a, b in zip(history, history[1:]))
