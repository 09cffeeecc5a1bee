import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import blob_image
from oracles import count_components, naive_chain, neighbour_counts, point_segment_distance, shoelace
from topoexplore.harness import final_graph, make_config
from topoexplore.occupancy import FREE, OCCUPIED, UNKNOWN, ground_truth_classmap
from topoexplore.skeleton import remove_staircases, thin
from topoexplore.topo_graph import (ENDPOINT, JUNCTION, NavGraph, build_graph, chain,
                                    chebyshev_clearance, detect_nodes, max_deviation, prune,
                                    split_edges, split_polyline, wall_danielsson_area)
from topoexplore.world import load_map


def image(rows):
    return np.array([[int(c) for c in r] for r in rows.split()], np.uint8)


def draw(shape, pixels):
    img = np.zeros(shape, np.uint8)
    for p in pixels:
        img[p] = 1
    return img


def skeleton_pixels(skel):
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(skel))}


def check_partition(skel, chains, roles):
    """Every non-node pixel sits in exactly one chain; chain ends are nodes."""
    seen = {}
    for c in chains:
        assert c[0] in roles and c[-1] in roles
        assert len(set(c)) == len(c) or c[0] == c[-1]
        for a, b in zip(c, c[1:]):
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
        for p in c[1:-1]:
            assert p not in roles
            seen[p] = seen.get(p, 0) + 1
    rest = skeleton_pixels(skel) - set(roles)
    assert set(seen) == rest
    assert all(v == 1 for v in seen.values())


def roles_of(graph):
    return {n.ij: n.role for n in graph.nodes.values()}


LINE = draw((5, 9), [(2, j) for j in range(1, 8)])
# diagonal cross: arm roots touch only the centre, so neighbour counts are clean
X_SHAPE = draw((11, 11), [(5, 5)] + [(5 + s * k, 5 + t * k) for k in (1, 2, 3, 4)
                                     for s in (-1, 1) for t in (-1, 1)])
PLUS = draw((11, 11), [(5, j) for j in range(1, 10)] + [(i, 5) for i in range(1, 10)])


# ------------------------------------------------------------ detect_nodes

def test_line_has_two_end_nodes():
    assert detect_nodes(LINE) == {(2, 1): ENDPOINT, (2, 7): ENDPOINT}


def test_x_shape_five_nodes():
    nodes = detect_nodes(X_SHAPE)
    assert len(nodes) == 5
    assert nodes[(5, 5)] == JUNCTION
    assert sorted(p for p, r in nodes.items() if r == ENDPOINT) == [(1, 1), (1, 9), (9, 1), (9, 9)]


def test_upright_plus_matches_counting_oracle():
    # the four arm roots are diagonal neighbours of each other, so each one
    # counts 4 skeleton neighbours and becomes a junction as well
    counts = neighbour_counts(PLUS)
    expected = {p for p, c in counts.items() if c != 2}
    assert set(detect_nodes(PLUS)) == expected
    assert len(expected) == 9


def test_isolated_pixel_is_degenerate_node():
    assert detect_nodes(draw((3, 3), [(1, 1)])) == {(1, 1): ENDPOINT}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_detect_nodes_matches_counting_oracle(seed):
    skel = thin(blob_image(np.random.default_rng(seed), 18, 18))
    counts = neighbour_counts(skel)
    nodes = detect_nodes(skel)
    assert set(nodes) == {p for p, c in counts.items() if c != 2}
    assert all((r == JUNCTION) == (counts[p] >= 3) for p, r in nodes.items())


# ------------------------------------------------------------ chain

def test_line_one_chain():
    nodes = detect_nodes(LINE)
    chains, g = chain(LINE, nodes)
    assert chains == [[(2, j) for j in range(1, 8)]]
    assert g.node_count == 2 and g.edge_count == 1


def test_x_shape_four_arms_on_the_centre():
    chains, g = chain(X_SHAPE, detect_nodes(X_SHAPE))
    assert len(chains) == 4 and g.edge_count == 4
    centre = g.node_at()[(5, 5)]
    assert all(centre in (e.u, e.v) for e in g.edges.values())
    assert sorted(len(c) for c in chains) == [5, 5, 5, 5]


def test_upright_plus_chains_everything():
    nodes = detect_nodes(PLUS)
    chains, g = chain(PLUS, nodes)
    check_partition(PLUS, chains, roles_of(g))
    assert g.node_count == 9
    assert count_components(PLUS) == 1
    assert len(components(g)) == 1


def test_two_adjacent_endpoints():
    skel = draw((4, 5), [(1, 1), (1, 2)])
    chains, g = chain(skel, detect_nodes(skel))
    assert chains == [[(1, 1), (1, 2)]]
    assert g.edge_count == 1


# A node reached through its neighbour q by an earlier chain: without the
# first repair the junction starts a second chain from the cancelled q.
SHARED_NEIGHBOUR = image("""
000000000
000000000
000001000
000010000
011100000
000010000
000001000
000000000
000000000""")

# A junction whose two short arms are diagonal neighbours of each other:
# without the second repair the trace from one arm steps across to the other
# arm and back to the junction, so the second arm never gets its own chain.
DIAGONAL_ARMS = image("""
000000000
000000000
000001000
000001100
000010000
000100000
000000000
000000000
000000000""")


def duplicates(chains):
    seen = [p for c in chains for p in c[1:-1]]
    return len(seen) - len(set(seen))


def test_shared_neighbour_fixture_fails_without_repair():
    nodes = detect_nodes(SHARED_NEIGHBOUR)
    assert duplicates(naive_chain(SHARED_NEIGHBOUR, nodes)) > 0
    assert duplicates(naive_chain(SHARED_NEIGHBOUR, nodes, fix1=True)) == 0


def test_shared_neighbour_fixture_chains_once():
    nodes = detect_nodes(SHARED_NEIGHBOUR)
    assert nodes[(4, 3)] == JUNCTION
    chains, g = chain(SHARED_NEIGHBOUR, nodes)
    check_partition(SHARED_NEIGHBOUR, chains, roles_of(g))
    assert g.edge_count == 3
    j = g.node_at()[(4, 3)]
    assert g.degree(j) == 3


def test_shortcut_fixture_fails_without_repair():
    nodes = detect_nodes(DIAGONAL_ARMS)
    bad = naive_chain(DIAGONAL_ARMS, nodes, fix1=True)
    assert [(3, 5), (2, 5), (3, 6), (3, 5)] in bad  # loop back onto the junction
    assert not any(c[0] == (3, 5) and c[1] == (3, 6) for c in bad)
    good = naive_chain(DIAGONAL_ARMS, nodes, fix1=True, fix2=True)
    assert [(3, 5), (3, 6)] in good


def test_shortcut_fixture_branch_reaches_its_node():
    nodes = detect_nodes(DIAGONAL_ARMS)
    chains, g = chain(DIAGONAL_ARMS, nodes)
    roles = roles_of(g)
    check_partition(DIAGONAL_ARMS, chains, roles)
    # the (3, 6) arm leaves the junction on a chain of its own
    arm = [c for c in chains if (3, 6) in c]
    assert len(arm) == 1 and arm[0][:2] == [(3, 5), (3, 6)]
    assert all(c[0] != c[-1] for c in chains)
    assert all(e.u != e.v for e in g.edges.values())


def components(g):
    parent = {n: n for n in g.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in g.edges.values():
        parent[find(e.u)] = find(e.v)
    groups = {}
    for n in g.nodes:
        groups.setdefault(find(n), set()).add(n)
    return list(groups.values())


def pixel_labels(skel):
    h, w = skel.shape
    label = -np.ones((h, w), int)
    k = 0
    for i, j in zip(*np.nonzero(skel)):
        if label[i, j] >= 0:
            continue
        stack = [(i, j)]
        label[i, j] = k
        while stack:
            a, b = stack.pop()
            for da in (-1, 0, 1):
                for db in (-1, 0, 1):
                    c, d = a + da, b + db
                    if 0 <= c < h and 0 <= d < w and skel[c, d] and label[c, d] < 0:
                        label[c, d] = k
                        stack.append((c, d))
        k += 1
    return label


def check_chaining(skel):
    chains, g = chain(skel, detect_nodes(skel))
    check_partition(skel, chains, roles_of(g))
    label = pixel_labels(skel)
    for group in components(g):
        assert len({label[g.nodes[n].ij] for n in group}) == 1
    assert len(components(g)) == count_components(skel)


def test_chain_partition_on_random_skeletons():
    rng = np.random.default_rng(66)
    for _ in range(300):
        skel = remove_staircases(thin(blob_image(rng)))
        check_chaining(skel)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_chain_partition_fuzz(seed, staircases):
    skel = thin(blob_image(np.random.default_rng(seed), 20, 20))
    if not staircases:
        skel = remove_staircases(skel)
    check_chaining(skel)


# ------------------------------------------------------------ split_edges

def graph_from(pixels):
    g = NavGraph()
    u = g.add_node(pixels[0], ENDPOINT)
    v = g.add_node(pixels[-1], ENDPOINT)
    g.add_edge(u, v, pixels)
    return g


def test_collinear_unchanged():
    g = graph_from([(0, j) for j in range(12)])
    out = split_edges(g, 1.0)
    assert out.node_count == 2 and out.edge_count == 1


def test_l_splits_at_corner():
    pixels = [(i, 0) for i in range(10)] + [(10, j) for j in range(11)]
    worst = max(point_segment_distance(p, pixels[0], pixels[-1]) for p in pixels[1:-1])
    assert worst == pytest.approx(10 / math.sqrt(2))
    out = split_edges(graph_from(pixels), 2.0)
    assert out.edge_count == 2 and out.node_count == 3
    assert sorted(n.ij for n in out.nodes.values())[1] == (10, 0)


def test_deviation_equal_to_limit_keeps_edge():
    pixels = [(0, 0), (1, 1), (2, 2), (1, 3), (0, 4)]
    assert max_deviation(pixels) == 2.0
    assert split_edges(graph_from(pixels), 2.0).edge_count == 1
    assert split_edges(graph_from(pixels), 1.99).edge_count == 2


def test_first_mode_splits_at_first_offender():
    pixels = [(0, 0), (0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (2, 6), (1, 7), (0, 8)]
    ends = lambda pieces: {piece[-1] for piece in pieces[:-1]}  # noqa: E731
    first = split_polyline(pixels, 0.5, mode="first")
    top = split_polyline(pixels, 0.5, mode="max")
    assert (1, 3) in ends(first) and (3, 5) in ends(top)
    assert ends(first) != ends(top)
    for pieces in (first, top):
        assert all(max_deviation(q) <= 0.5 for q in pieces)


def test_limit_must_be_positive():
    with pytest.raises(ValueError):
        split_edges(graph_from([(0, 0), (1, 1)]), 0.0)


def random_chain(rng, n):
    steps = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    p = (0, 0)
    out = [p]
    seen = {p}
    for _ in range(n * 4):
        di, dj = steps[rng.integers(8)]
        q = (p[0] + di, p[1] + dj)
        if q in seen:
            continue
        out.append(q)
        seen.add(q)
        p = q
        if len(out) == n:
            break
    return out


def test_split_contract_on_200_chains():
    rng = np.random.default_rng(200)
    for _ in range(200):
        pixels = random_chain(rng, int(rng.integers(3, 60)))
        limit = float(rng.uniform(0.5, 4.0))
        out = split_edges(graph_from(pixels), limit)
        covered = []
        for e in out.edges.values():
            a, b = out.nodes[e.u].ij, out.nodes[e.v].ij
            assert {e.pixels[0], e.pixels[-1]} == {a, b}
            for p in e.pixels[1:-1]:
                assert point_segment_distance(p, a, b) <= limit + 1e-12
            covered.extend(e.pixels[1:])
        assert sorted(covered) == sorted(pixels[1:])


# ------------------------------------------------------------ Wall-Danielsson

def test_area_collinear_zero():
    assert wall_danielsson_area((0, 0), [(0, k) for k in range(1, 8)]) == 0.0


def test_area_unit_triangle():
    pts = [(0, 0), (1, 0), (1, 1)]
    assert abs(wall_danielsson_area(pts[0], pts[1:])) == pytest.approx(0.5)
    assert wall_danielsson_area(pts[0], pts[1:]) == pytest.approx(shoelace(pts))


def test_s_shape_cancels_but_deviates():
    # one bump above the edge, a mirrored one below
    pixels = [(0, 0), (-1, 1), (-2, 2), (-1, 3), (0, 4), (1, 5), (2, 6), (1, 7), (0, 8)]
    assert wall_danielsson_area(pixels[0], pixels[1:]) == pytest.approx(0.0)
    assert max_deviation(pixels) == 2.0


# ------------------------------------------------------------ prune

def corridor_graph():
    cm = np.full((9, 30), FREE, np.uint8)
    g = graph_from([(4, j) for j in range(2, 28)])
    return g, cm


def test_clear_leaf_unchanged():
    big = np.full((30, 60), FREE, np.uint8)
    g2 = graph_from([(15, j) for j in range(20, 40)])
    out = prune(g2, big, 3)
    assert roles_of(out) == roles_of(g2)


def test_leaf_near_unknown_retracts():
    cm = np.full((21, 40), FREE, np.uint8)
    cm[:, 0] = UNKNOWN
    g = graph_from([(10, j) for j in range(2, 30)])
    clear = chebyshev_clearance(cm)
    assert clear[10, 2] == 2
    out = prune(g, cm, 3)
    ends = sorted(n.ij for n in out.nodes.values())
    assert ends[0] == (10, 4)  # first pixel along the chain with clearance > 3
    assert ends[0][1] - 2 >= 2
    assert out.edge_count == 1


def test_whole_edge_near_unknown_removed_junction_kept():
    cm = np.full((20, 20), FREE, np.uint8)
    cm[0, :] = UNKNOWN
    g = NavGraph()
    j = g.add_node((10, 10), JUNCTION)
    a = g.add_node((1, 10), ENDPOINT)
    b = g.add_node((18, 10), ENDPOINT)
    g.add_edge(j, a, [(i, 10) for i in range(10, 0, -1)])
    g.add_edge(j, b, [(i, 10) for i in range(10, 19)])
    out = prune(g, cm, 12)
    assert j in out.nodes
    assert a not in out.nodes
    assert all(n.role == JUNCTION or chebyshev_clearance(cm)[n.ij] > 12
               for n in out.nodes.values() if out.degree(n.id) <= 1)


def test_negative_margin_rejected():
    g, cm = corridor_graph()
    with pytest.raises(ValueError):
        prune(g, cm, -1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4))
def test_pruned_leaves_are_clear(seed, margin):
    rng = np.random.default_rng(seed)
    blob = blob_image(rng, 24, 24)
    cm = np.where(blob == 1, FREE, UNKNOWN).astype(np.uint8)
    cm[rng.random(cm.shape) < 0.02] = OCCUPIED
    out = build_graph(cm, 3.0, margin).graph
    clear = chebyshev_clearance(cm)
    for n in out.nodes.values():
        if out.degree(n.id) <= 1:
            assert n.role == JUNCTION or clear[n.ij] > margin


# ------------------------------------------------------------ build_graph

def test_all_unknown_empty_graph():
    b = build_graph(np.full((30, 30), UNKNOWN, np.uint8))
    assert b.node_count == 0 and b.edge_count == 0


def test_corridor_graph():
    cm = np.full((11, 50), OCCUPIED, np.uint8)
    cm[2:9, 2:48] = FREE
    b = build_graph(cm, 3.0, 1)
    assert b.node_count == 2
    assert 1 <= b.edge_count <= 2
    assert all(n.role == ENDPOINT for n in b.graph.nodes.values())


@pytest.mark.parametrize("name", ["maze", "office", "aaai"])
def test_explored_map_node_count(name):
    world = load_map(name)
    cfg = make_config(map=name, controller="topo")
    b = final_graph(ground_truth_classmap(world), cfg, world)
    assert 20 <= b.node_count <= 300
    assert all(e.u != e.v for e in b.graph.edges.values())


def test_graph_text_export():
    g = NavGraph(0.01)
    g.add_edge(g.add_node((2, 1), ENDPOINT), g.add_node((2, 7), ENDPOINT), [(2, 1), (2, 7)])
    lines = g.to_text().splitlines()
    assert lines[0].split()[0] == "node" and lines[-1].split()[0] == "edge"
    assert float(lines[-1].split()[3]) == pytest.approx(0.06)
