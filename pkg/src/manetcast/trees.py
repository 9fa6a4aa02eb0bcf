"""Minimum-hop (BFS) and minimum-edge (Kou-Markowsky-Berman) multicast trees.

Every tie is broken the same way: neighbors are explored in ascending node id,
and spanning-tree edges are taken in ascending ``(weight, min endpoint, max
endpoint)`` order.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .geometry import Edge, StaticGraph, norm_edge


class TreeKind(str, enum.Enum):
    MIN_HOP = "MinHop"
    MIN_EDGE = "MinEdge"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class MulticastGroup:
    source: int
    receivers: tuple[int, ...]

    def __post_init__(self):
        receivers = tuple(sorted(set(int(r) for r in self.receivers)))
        object.__setattr__(self, "receivers", receivers)
        if not receivers:
            raise ValueError("a multicast group needs at least one receiver")
        if self.source in receivers:
            raise ValueError(f"source {self.source} listed among receivers")
        if self.source < 0 or receivers[0] < 0:
            raise ValueError("node ids must be non-negative")

    @property
    def members(self) -> tuple[int, ...]:
        """Source first, then receivers in ascending order."""
        return (self.source,) + self.receivers

    def check(self, node_count: int) -> None:
        if max(self.members) >= node_count:
            raise ValueError(f"group {self.members} references nodes outside [0, {node_count})")


@dataclass(frozen=True)
class MulticastTree:
    source: int
    edges: frozenset[Edge]
    predecessor: Mapping[int, int]
    kind: TreeKind

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.predecessor) | {self.source}

    def __len__(self) -> int:
        return len(self.edges)


@dataclass
class BfsResult:
    source: int
    order: list[int]
    predecessor: dict[int, Optional[int]]
    distance: dict[int, int]

    def path_to(self, node: int) -> list[int]:
        """Source-to-node path by predecessor traceback."""
        if node not in self.distance:
            raise KeyError(f"node {node} not reachable from {self.source}")
        path = [node]
        while path[-1] != self.source:
            path.append(self.predecessor[path[-1]])
        path.reverse()
        return path


def bfs(graph: StaticGraph, source: int) -> BfsResult:
    if source not in graph:
        raise ValueError(f"unknown source node {source}")
    neighbors = graph.neighbors
    predecessor: dict[int, Optional[int]] = {source: None}
    distance = {source: 0}
    order = [source]
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = distance[u] + 1
        for v in neighbors[u]:
            if v not in distance:
                distance[v] = du
                predecessor[v] = u
                order.append(v)
                queue.append(v)
    return BfsResult(source, order, predecessor, distance)


def _tree_from_edges(source: int, edges: frozenset[Edge], kind: TreeKind) -> MulticastTree:
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    predecessor = {}
    queue = deque([source])
    seen = {source}
    while queue:
        u = queue.popleft()
        for v in sorted(adj.get(u, ())):
            if v not in seen:
                seen.add(v)
                predecessor[v] = u
                queue.append(v)
    return MulticastTree(source, edges, predecessor, kind)


def min_hop_tree(graph: StaticGraph, group: MulticastGroup) -> Optional[MulticastTree]:
    """Union of the BFS traceback paths from every receiver; None if any is unreachable."""
    group.check(graph.node_count)
    result = bfs(graph, group.source)
    if any(r not in result.distance for r in group.receivers):
        return None
    edges = set()
    predecessor = {}
    for r in group.receivers:
        v = r
        while v != group.source and v not in predecessor:
            u = result.predecessor[v]
            predecessor[v] = u
            edges.add(norm_edge(u, v))
            v = u
    return MulticastTree(group.source, frozenset(edges), predecessor, TreeKind.MIN_HOP)


class _DisjointSet:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent.setdefault(root, root) != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def kruskal(weighted_edges: Iterable[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Minimum spanning forest of ``(weight, u, v)`` edges with u < v.

    Edges are scanned in ascending ``(weight, u, v)`` order, which fixes the
    choice among equal-weight alternatives.
    """
    ds = _DisjointSet()
    return [e for e in sorted(weighted_edges) if ds.union(e[1], e[2])]


@dataclass
class SteinerAudit:
    """Counts how often the spanning-tree pass or leaf pruning changed the
    expanded terminal-path subgraph, and how many outputs failed the tree
    check (expected: never)."""

    calls: int = 0
    mst_changed: int = 0
    pruned: int = 0
    altered: int = 0
    invalid: int = 0
    examples: list = field(default_factory=list)

    def merge(self, other: "SteinerAudit") -> None:
        self.calls += other.calls
        self.mst_changed += other.mst_changed
        self.pruned += other.pruned
        self.altered += other.altered
        self.invalid += other.invalid
        self.examples.extend(other.examples[: max(0, 5 - len(self.examples))])

    def record(self, expanded: set[Edge], spanning: set[Edge], final: set[Edge],
               valid: bool, context: Optional[dict] = None) -> None:
        self.calls += 1
        self.invalid += not valid
        mst_changed = spanning != expanded
        pruned = final != spanning
        self.mst_changed += mst_changed
        self.pruned += pruned
        if mst_changed or pruned:
            self.altered += 1
            if len(self.examples) < 5:
                self.examples.append({**(context or {}), "expanded": sorted(expanded), "final": sorted(final)})

    def as_dict(self) -> dict[str, int]:
        return {"calls": self.calls, "mst_changed": self.mst_changed,
                "pruned": self.pruned, "altered": self.altered, "invalid": self.invalid}


def prune_leaves(edges: set[Edge], terminals: set[int]) -> set[Edge]:
    """Iteratively drop leaves that are not terminals."""
    edges = set(edges)
    degree: dict[int, int] = {}
    for u, v in edges:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    leaves = sorted(n for n, d in degree.items() if d == 1 and n not in terminals)
    while leaves:
        leaf = leaves.pop()
        edge = next((e for e in edges if leaf in e), None)
        if edge is None:
            continue
        edges.remove(edge)
        other = edge[0] if edge[1] == leaf else edge[1]
        degree[leaf] -= 1
        degree[other] -= 1
        if degree[other] == 1 and other not in terminals:
            leaves.append(other)
    return edges


def spanning_and_prune(expanded: set[Edge], terminals: set[int]) -> tuple[set[Edge], set[Edge]]:
    """Unit-weight spanning tree of the expanded subgraph, then leaf pruning."""
    spanning = {(u, v) for _, u, v in kruskal((1, u, v) for u, v in expanded)}
    return spanning, prune_leaves(spanning, terminals)


def kou_steiner_tree(
    graph: StaticGraph,
    group: MulticastGroup,
    audit: Optional[SteinerAudit] = None,
) -> Optional[MulticastTree]:
    """Approximate minimum-edge Steiner tree over the group members.

    1. metric closure over the members from one BFS per member;
    2. its minimum spanning tree;
    3. each closure edge (a, b), a < b, expanded into the BFS path rooted at a;
    4. a unit-weight spanning tree of that subgraph;
    5. non-member leaves pruned.

    Steps 4 and 5 are expected to be no-ops on unit-disk graphs; when ``audit``
    is given, every call where they were not is counted there. Returns None
    when the members are not all in one component.
    """
    group.check(graph.node_count)
    members = group.members
    searches = {m: bfs(graph, m) for m in members}
    if any(r not in searches[group.source].distance for r in group.receivers):
        return None

    closure = [
        (searches[a].distance[b], a, b)
        for a, b in itertools.combinations(sorted(members), 2)
    ]
    expanded: set[Edge] = set()
    for _, a, b in kruskal(closure):
        path = searches[a].path_to(b)
        expanded.update(norm_edge(u, v) for u, v in zip(path, path[1:]))

    spanning, final = spanning_and_prune(expanded, set(members))
    tree = _tree_from_edges(group.source, frozenset(final), TreeKind.MIN_EDGE)
    if audit is not None:
        audit.record(expanded, spanning, final, is_valid_tree(tree, group),
                     {"time": graph.time, "group": list(members)})
    return tree


def build_tree(kind: TreeKind, graph: StaticGraph, group: MulticastGroup,
               audit: Optional[SteinerAudit] = None) -> Optional[MulticastTree]:
    kind = TreeKind(kind)
    if kind is TreeKind.MIN_EDGE:
        return kou_steiner_tree(graph, group, audit)
    return min_hop_tree(graph, group)


EXACT_ORACLE_LIMIT = 12


def exact_steiner_oracle(graph: StaticGraph, group: MulticastGroup) -> Optional[int]:
    """Fewest edges of any tree spanning the group, by exhaustive search.

    Tries Steiner-vertex subsets in increasing size; the first subset whose
    union with the group induces a connected subgraph gives the optimum
    ``|group| + |subset| - 1``. Returns None if no such subset exists.
    """
    n = graph.node_count
    if n > EXACT_ORACLE_LIMIT:
        raise ValueError(f"exact oracle refuses graphs with more than {EXACT_ORACLE_LIMIT} vertices (got {n})")
    group.check(n)
    terminals = set(group.members)
    others = [v for v in range(n) if v not in terminals]
    adj = graph.adjacency

    def connected(nodes: set[int]) -> bool:
        start = next(iter(nodes))
        stack, seen = [start], {start}
        while stack:
            u = stack.pop()
            for v in nodes:
                if v not in seen and adj[u, v]:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(nodes)

    for k in range(len(others) + 1):
        for extra in itertools.combinations(others, k):
            if connected(terminals | set(extra)):
                return len(terminals) + k - 1
    return None


def tree_hop_counts(tree: MulticastTree, group: MulticastGroup) -> dict[int, int]:
    """Hops from the source to each receiver along the tree."""
    hops = {}
    for r in group.receivers:
        if r not in tree.predecessor:
            raise ValueError(f"receiver {r} is not in the tree")
        count, v = 0, r
        while v != tree.source:
            v = tree.predecessor[v]
            count += 1
            if count > len(tree.predecessor):
                raise ValueError("predecessor map contains a cycle")
        hops[r] = count
    return hops


def is_valid_tree(tree: MulticastTree, group: MulticastGroup) -> bool:
    """Connected, acyclic, spans the group, and no non-member leaves."""
    nodes = {u for e in tree.edges for u in e} | {tree.source}
    if len(tree.edges) != len(nodes) - 1:
        return False
    ds = _DisjointSet()
    for u, v in tree.edges:
        if not ds.union(u, v):
            return False
    if not set(group.members) <= nodes:
        return False
    if any(ds.find(v) != ds.find(tree.source) for v in nodes):
        return False
    degree: dict[int, int] = {}
    for u, v in tree.edges:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    members = set(group.members)
    return all(d > 1 or n in members for n, d in degree.items())
