"""Bus-branch graph algorithms: chordal extension, cliques, cycles."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

__all__ = [
    "BusGraph",
    "Clique",
    "Cycle",
    "NotChordalError",
    "build_graph",
    "graph_from_edges",
    "chordal_extension",
    "maximal_cliques",
    "cycle_basis",
    "enumerate_chordless_cycles",
]


class NotChordalError(ValueError):
    pass


@dataclass(frozen=True)
class BusGraph:
    """Simple undirected graph over bus ids.

    ``edges`` keeps first-seen order with each edge stored as ``(min, max)``.
    """

    nodes: tuple
    edges: tuple
    root: int | None = None
    adj: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = {v: set() for v in self.nodes}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "adj", {v: frozenset(nb) for v, nb in adj.items()})

    def has_edge(self, u, v) -> bool:
        return v in self.adj[u]

    def degree(self, v) -> int:
        return len(self.adj[v])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for w in self.adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class Clique:
    members: tuple
    index: int

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass(frozen=True)
class Cycle:
    buses: tuple
    index: int = 0

    @property
    def edges(self) -> tuple:
        """Oriented edges ``(buses[k], buses[k+1])`` closing back to the start."""
        b = self.buses
        return tuple((b[k], b[(k + 1) % len(b)]) for k in range(len(b)))

    def __len__(self):
        return len(self.buses)

    def reversed(self) -> "Cycle":
        return Cycle(tuple(reversed(self.buses)), self.index)


def graph_from_edges(nodes, edges, root=None) -> BusGraph:
    """Build a simple graph; drops self-loops and parallel edges."""
    nodes = tuple(nodes)
    seen = set()
    out = []
    for u, v in edges:
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return BusGraph(nodes, tuple(out), root)


def build_graph(net) -> BusGraph:
    """Bus graph of a network, rooted at the slack bus."""
    g = graph_from_edges(
        (b.id for b in net.buses),
        ((br.from_bus, br.to_bus) for br in net.branches),
        root=net.buses[net.slack].id,
    )
    if not g.is_connected():
        raise ValueError("network graph is disconnected")
    return g


def chordal_extension(g: BusGraph):
    """Greedy minimum-degree elimination; returns ``(chordal graph, ordering)``.

    Ties go to the smallest bus id.  Fill edges are appended after the
    original edges in the order they are created.
    """
    work = {v: set(nb) for v, nb in g.adj.items()}
    remaining = set(g.nodes)
    order = []
    fill = []
    while remaining:
        v = min(remaining, key=lambda u: (len(work[u]), u))
        nbrs = sorted(work[v])
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1 :]:
                if b not in work[a]:
                    work[a].add(b)
                    work[b].add(a)
                    fill.append((min(a, b), max(a, b)))
        for a in nbrs:
            work[a].discard(v)
        del work[v]
        remaining.discard(v)
        order.append(v)
    chordal = BusGraph(g.nodes, g.edges + tuple(fill), g.root)
    return chordal, tuple(order)


def maximal_cliques(chordal: BusGraph, ordering) -> list[Clique]:
    """Maximal cliques of a chordal graph from a perfect elimination ordering."""
    pos = {v: k for k, v in enumerate(ordering)}
    if set(pos) != set(chordal.nodes):
        raise ValueError("ordering does not cover the graph's vertices")
    candidates = []
    for v in ordering:
        later = [u for u in chordal.adj[v] if pos[u] > pos[v]]
        for i, a in enumerate(later):
            for b in later[i + 1 :]:
                if not chordal.has_edge(a, b):
                    raise NotChordalError(f"ordering is not a perfect elimination ordering at vertex {v}")
        candidates.append(frozenset([v, *later]))
    # drop candidates contained in another one
    candidates.sort(key=len, reverse=True)
    kept: list[frozenset] = []
    for cand in candidates:
        if not any(cand <= k for k in kept):
            kept.append(cand)
    members = sorted(tuple(sorted(k)) for k in kept)
    return [Clique(m, i) for i, m in enumerate(members)]


def _bfs_tree(g: BusGraph, root):
    parent = {root: None}
    depth = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in sorted(g.adj[v]):
            if w not in parent:
                parent[w] = v
                depth[w] = depth[v] + 1
                queue.append(w)
    return parent, depth


def cycle_basis(g: BusGraph, root=None) -> list[Cycle]:
    """Fundamental cycles of a BFS spanning tree.

    One cycle per non-tree edge ``(u, v)``, in edge-list order; the cycle
    runs from ``u`` up the tree to the common ancestor, down to ``v`` and
    closes through the non-tree edge.
    """
    if not g.nodes:
        return []
    root = root if root is not None else (g.root if g.root is not None else g.nodes[0])
    parent, depth = _bfs_tree(g, root)
    if len(parent) != len(g.nodes):
        raise ValueError("graph is disconnected")
    cycles = []
    for u, v in g.edges:
        if parent.get(u) == v or parent.get(v) == u:
            continue
        left, right = [u], [v]
        a, b = u, v
        while depth[a] > depth[b]:
            a = parent[a]
            left.append(a)
        while depth[b] > depth[a]:
            b = parent[b]
            right.append(b)
        while a != b:
            a, b = parent[a], parent[b]
            left.append(a)
            right.append(b)
        seq = left + right[-2::-1]
        cycles.append(Cycle(tuple(seq), len(cycles)))
    return cycles


def enumerate_chordless_cycles(g: BusGraph, max_len: int) -> list[Cycle]:
    """All induced cycles with at most ``max_len`` vertices.

    Each cycle is reported once, starting at its smallest vertex and
    oriented so that the second vertex is smaller than the last.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    found = []
    for s in sorted(g.nodes):
        # paths s -> ... -> v using vertices greater than s, kept chordless
        stack = [(s, w) for w in sorted(g.adj[s], reverse=True) if w > s]
        stack = [[s, w] for _, w in stack]
        while stack:
            path = stack.pop()
            v = path[-1]
            if len(path) >= max_len:
                continue
            inner = set(path[1:-1])
            for w in sorted(g.adj[v], reverse=True):
                if w <= s or w in path:
                    continue
                if any(x in inner for x in g.adj[w]):
                    continue  # w would create a chord with an inner vertex
                if s in g.adj[w]:
                    if len(path) >= 2 and path[1] < w:
                        found.append(tuple(path + [w]))
                    continue  # any extension through w has chord (s, w)
                stack.append(path + [w])
    found.sort(key=lambda c: (len(c), c))
    return [Cycle(c, i) for i, c in enumerate(found)]
