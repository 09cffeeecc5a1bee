"""Skeleton to navigation graph: node detection, chaining, recursive edge
splitting and pruning of leaves that sit too close to unexplored space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .occupancy import FREE
from .skeleton import binarize, nz_map, remove_staircases, thin

JUNCTION, ENDPOINT, SPLIT = "junction", "endpoint", "split"

N4 = ((-1, 0), (0, -1), (1, 0), (0, 1))
NDIAG = ((-1, -1), (1, -1), (1, 1), (-1, 1))


@dataclass
class Node:
    id: int
    ij: tuple
    role: str


@dataclass
class Edge:
    id: int
    u: int
    v: int
    length: float
    pixels: tuple  # supporting chain segment, from u's pixel to v's pixel


@dataclass
class NavGraph:
    cell_size: float = 1.0
    nodes: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)
    _next_node: int = 0
    _next_edge: int = 0

    def add_node(self, ij, role):
        n = Node(self._next_node, tuple(int(v) for v in ij), role)
        self.nodes[n.id] = n
        self._next_node += 1
        return n.id

    def add_edge(self, u, v, pixels):
        if u == v:
            raise ValueError("self-loop edges are not allowed")
        a, b = self.nodes[u].ij, self.nodes[v].ij
        length = math.hypot(a[0] - b[0], a[1] - b[1]) * self.cell_size
        e = Edge(self._next_edge, u, v, length, tuple(pixels))
        self.edges[e.id] = e
        self._next_edge += 1
        return e.id

    def remove_edge(self, eid):
        del self.edges[eid]

    def remove_node(self, nid):
        for eid in [e.id for e in self.edges.values() if nid in (e.u, e.v)]:
            del self.edges[eid]
        del self.nodes[nid]

    def incident(self, nid):
        return [e for e in self.edges.values() if nid in (e.u, e.v)]

    def adjacency(self):
        adj = {n: [] for n in self.nodes}
        for e in self.edges.values():
            adj[e.u].append((e.v, e.length, e.id))
            adj[e.v].append((e.u, e.length, e.id))
        return adj

    def degree(self, nid):
        return len(self.incident(nid))

    def node_at(self):
        return {n.ij: n.id for n in self.nodes.values()}

    def position(self, nid):
        """Metric (x, y) of a node's cell centre."""
        i, j = self.nodes[nid].ij
        return (j + 0.5) * self.cell_size, (i + 0.5) * self.cell_size

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def edge_count(self):
        return len(self.edges)

    def copy(self):
        g = NavGraph(self.cell_size, _next_node=self._next_node, _next_edge=self._next_edge)
        g.nodes = {k: Node(n.id, n.ij, n.role) for k, n in self.nodes.items()}
        g.edges = {k: Edge(e.id, e.u, e.v, e.length, e.pixels) for k, e in self.edges.items()}
        return g

    def to_text(self):
        """``node id x y role`` and ``edge id1 id2 length`` lines (metres)."""
        lines = []
        for nid in sorted(self.nodes):
            x, y = self.position(nid)
            lines.append(f"node {nid} {x:.6f} {y:.6f} {self.nodes[nid].role}")
        for e in sorted(self.edges.values(), key=lambda e: e.id):
            lines.append(f"edge {e.u} {e.v} {e.length:.6f}")
        return "\n".join(lines) + "\n"


def detect_nodes(skel):
    """Skeleton pixels with 1 neighbour (endpoint), >= 3 (junction) or none
    (degenerate endpoint). Returns ``{(i, j): role}``."""
    sk = (np.asarray(skel) != 0).astype(np.uint8)
    count = nz_map(sk)
    nodes = {}
    for i, j in zip(*np.nonzero(sk)):
        c = count[i, j]
        if c >= 3:
            nodes[(int(i), int(j))] = JUNCTION
        elif c <= 1:
            nodes[(int(i), int(j))] = ENDPOINT
    return nodes


def _chebyshev_adjacent4(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


class _Chainer:
    def __init__(self, skel, nodes):
        self.sk = np.asarray(skel) != 0
        self.h, self.w = self.sk.shape
        self.roles = dict(nodes)
        self.cancelled = set()
        self.chains = []
        self.owner = {}  # interior pixel -> chain index
        self.pairs = set()

    def on(self, p):
        i, j = p
        return 0 <= i < self.h and 0 <= j < self.w and self.sk[i, j]

    def neighbours(self, p, offsets):
        return [(p[0] + di, p[1] + dj) for di, dj in offsets if self.on((p[0] + di, p[1] + dj))]

    def add_chain(self, pixels):
        idx = len(self.chains)
        self.chains.append(list(pixels))
        for p in pixels[1:-1]:
            self.owner[p] = idx

    def next_pixel(self, cur, prev, chain):
        start = chain[0]

        def free_pixel(p):
            return (p not in self.roles and p not in self.cancelled
                    and not _chebyshev_adjacent4(p, prev))

        def node_pixel(p):
            if p not in self.roles or p == prev:
                return False
            return p != start or len(chain) >= 3

        four = self.neighbours(cur, N4)
        diag = self.neighbours(cur, NDIAG)
        for group, test in ((four, free_pixel), (four, node_pixel),
                            (diag, free_pixel), (diag, node_pixel)):
            for p in group:
                if test(p):
                    return p
        return None

    def trace(self, start, q):
        chain = [start, q]
        self.cancelled.add(q)
        prev, cur = start, q
        while True:
            nxt = self.next_pixel(cur, prev, chain)
            if nxt is None:
                self.roles[cur] = ENDPOINT  # dangling end becomes a node
                break
            chain.append(nxt)
            if nxt in self.roles:
                break
            self.cancelled.add(nxt)
            prev, cur = cur, nxt
        if chain[-1] == chain[0]:
            # Closed loop: cut it in the middle so no edge is a self-loop.
            mid = len(chain) // 2
            self.roles[chain[mid]] = SPLIT
            self.add_chain(chain[:mid + 1])
            self.add_chain(chain[mid:])
        else:
            self.add_chain(chain)

    def promote(self, p):
        """Turn an already chained pixel into a node, splitting its chain."""
        idx = self.owner.pop(p)
        pixels = self.chains[idx]
        k = pixels.index(p)
        self.chains[idx] = pixels[:k + 1]
        self.chains.append(pixels[k:])
        for r in pixels[k + 1:-1]:
            self.owner[r] = len(self.chains) - 1
        self.roles[p] = SPLIT

    def start_from(self, node):
        for q in self.neighbours(node, N4) + self.neighbours(node, NDIAG):
            if q in self.roles:
                key = frozenset((node, q))
                if key not in self.pairs:
                    self.pairs.add(key)
                    self.add_chain([node, q])
            elif q not in self.cancelled:  # an earlier chain may have consumed it
                self.trace(node, q)

    def run(self):
        for node in sorted(self.roles):
            self.start_from(node)
        # Pixels no node reaches (node-free loops, stranded spurs).
        for i, j in zip(*np.nonzero(self.sk)):
            p = (int(i), int(j))
            if p in self.roles or p in self.cancelled:
                continue
            self.roles[p] = SPLIT
            for q in self.neighbours(p, N4) + self.neighbours(p, NDIAG):
                if q in self.cancelled and q not in self.roles:
                    self.promote(q)
            self.start_from(p)
        # Nodes created during tracing may touch other nodes directly.
        for node in sorted(self.roles):
            for q in self.neighbours(node, N4) + self.neighbours(node, NDIAG):
                if q in self.roles:
                    key = frozenset((node, q))
                    if key not in self.pairs and not self._chained(node, q):
                        self.pairs.add(key)
                        self.add_chain([node, q])
        return self.chains, self.roles

    def _chained(self, a, b):
        return any(len(c) == 2 and {c[0], c[-1]} == {a, b} for c in self.chains)


def chain(skel, nodes, cell_size=1.0):
    """Trace skeleton branches between nodes.

    The next pixel is chosen in the order: unvisited non-node 4-neighbour,
    node 4-neighbour, non-node diagonal neighbour, node diagonal neighbour.
    A start neighbour consumed by an earlier chain is skipped, and a chain
    never steps onto a pixel 4-adjacent to the one it just left. Returns
    ``(chains, graph)`` where each chain is a pixel list from node to node.
    """
    chains, roles = _Chainer(skel, nodes).run()
    g = NavGraph(cell_size)
    ids = {p: g.add_node(p, roles[p]) for p in sorted(roles)}
    for c in chains:
        g.add_edge(ids[c[0]], ids[c[-1]], c)
    return chains, g


def _segment_distances(pixels):
    a = np.asarray(pixels[0], float)
    b = np.asarray(pixels[-1], float)
    pts = np.asarray(pixels[1:-1], float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def split_polyline(pixels, limit, mode="max"):
    """Break a pixel chain into pieces whose interior pixels all lie within
    ``limit`` of the piece's end-to-end segment. ``mode="first"`` splits at
    the first offending pixel instead of the farthest one."""
    out = []
    stack = [list(pixels)]
    while stack:
        piece = stack.pop()
        if len(piece) <= 2:
            out.append(piece)
            continue
        d = _segment_distances(piece)
        if mode == "max":
            k = int(np.argmax(d))
            over = d[k] > limit
        else:
            hits = np.flatnonzero(d > limit)
            over = hits.size > 0
            k = int(hits[0]) if over else 0
        if not over:
            out.append(piece)
            continue
        cut = k + 1
        stack.append(piece[cut:])
        stack.append(piece[:cut + 1])
    return out


def split_edges(graph, limit=3.0, mode="max"):
    """Recursively split every edge at its maximum-deviation chain pixel
    until no chain pixel is farther than ``limit`` pixels from its edge."""
    if limit <= 0:
        raise ValueError("limit must be positive")
    g = graph.copy()
    for eid in sorted(g.edges):
        e = g.edges[eid]
        pieces = split_polyline(e.pixels, limit, mode)
        if len(pieces) == 1:
            continue
        g.remove_edge(eid)
        prev = e.u
        for n, piece in enumerate(pieces):
            nxt = e.v if n == len(pieces) - 1 else g.add_node(piece[-1], SPLIT)
            g.add_edge(prev, nxt, piece)
            prev = nxt
    return g


def max_deviation(pixels):
    if len(pixels) <= 2:
        return 0.0
    return float(np.max(_segment_distances(pixels)))


def wall_danielsson_area(start, pixels):
    """Signed area between an edge and its chain, accumulated as the sum of
    triangles (start, p_k, p_k+1) over successive chain pixels."""
    a = np.asarray(start, float)
    pts = np.asarray(pixels, float) - a
    if len(pts) < 2:
        return 0.0
    cross = pts[:-1, 0] * pts[1:, 1] - pts[:-1, 1] * pts[1:, 0]
    return 0.5 * float(cross.sum())


def chebyshev_clearance(classmap):
    """Chessboard distance from each cell to the nearest non-FREE cell
    (outside the map counts as non-FREE)."""
    free = np.pad(classmap == FREE, 1, constant_values=False)
    return ndimage.distance_transform_cdt(free, metric="chessboard")[1:-1, 1:-1]


def prune(graph, classmap, margin):
    """Retract leaf nodes that lie within ``margin`` cells (Chebyshev) of
    UNKNOWN or OCCUPIED space; drop the edge if nothing clear is left.
    Junctions are never removed."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    clear = chebyshev_clearance(classmap)
    g = graph.copy()

    def ok(p):
        return clear[p] > margin

    changed = True
    while changed:
        changed = False
        for nid in sorted(g.nodes):
            node = g.nodes.get(nid)
            if node is None or node.role == JUNCTION or ok(node.ij):
                continue
            inc = g.incident(nid)
            if not inc:
                del g.nodes[nid]
                changed = True
                continue
            if len(inc) != 1:
                continue
            e = inc[0]
            pixels = list(e.pixels) if e.u == nid else list(reversed(e.pixels))
            other = e.v if e.u == nid else e.u
            k = next((k for k in range(1, len(pixels) - 1) if ok(pixels[k])), None)
            g.remove_edge(e.id)
            if k is None:
                del g.nodes[nid]
            else:
                node.ij = pixels[k]
                g.add_edge(nid, other, pixels[k:])
            changed = True
    return g


@dataclass
class GraphBuild:
    image: np.ndarray
    skeleton: np.ndarray
    chains: list
    draft: NavGraph
    graph: NavGraph

    @property
    def node_count(self):
        return self.graph.node_count

    @property
    def edge_count(self):
        return self.graph.edge_count


def build_graph(classmap, limit=3.0, margin=5.0, clearance=0.0, cell_size=1.0,
                mode="max", literal_thinning=False, staircases=False):
    """binarize -> thin -> (staircase removal) -> detect_nodes -> chain ->
    split_edges -> prune. ``staircases=True`` keeps the 4-connected step
    corners, each of which then counts as a junction."""
    image = binarize(classmap, clearance)
    skel = thin(image, literal=literal_thinning) if image.any() else image
    if not staircases:
        skel = remove_staircases(skel)
    nodes = detect_nodes(skel)
    chains, draft = chain(skel, nodes, cell_size)
    graph = prune(split_edges(draft, limit, mode), classmap, margin)
    return GraphBuild(image, skel, chains, draft, graph)
