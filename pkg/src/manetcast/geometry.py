"""Points and unit-disk snapshots of the network topology."""

from __future__ import annotations

from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

Edge = tuple[int, int]


class Point(NamedTuple):
    x: float
    y: float


PositionsLike = Union[np.ndarray, Sequence[Point], Mapping[int, Point]]


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


def _as_array(positions: PositionsLike) -> np.ndarray:
    if isinstance(positions, Mapping):
        n = len(positions)
        if sorted(positions) != list(range(n)):
            raise ValueError("node ids must be dense integers 0..N-1")
        positions = [positions[i] for i in range(n)]
    arr = np.array(positions, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"positions must have shape (N, 2), got {arr.shape}")
    return arr


class StaticGraph:
    """Unit-disk snapshot G(t): an edge joins every pair within ``range`` meters.

    Immutable once built. Adjacency is kept as a boolean matrix (O(1) edge
    tests) and as ascending neighbor tuples (BFS iteration order).
    """

    def __init__(self, time: float, positions: np.ndarray, range: float, adjacency: np.ndarray):
        self.time = time
        self.positions = positions
        self.range = range
        self.adjacency = adjacency
        self.positions.flags.writeable = False
        self.adjacency.flags.writeable = False
        self.neighbors: tuple[tuple[int, ...], ...] = tuple(
            tuple(np.flatnonzero(row).tolist()) for row in adjacency
        )

    @property
    def node_count(self) -> int:
        return len(self.neighbors)

    def __contains__(self, node: int) -> bool:
        return isinstance(node, (int, np.integer)) and 0 <= node < self.node_count

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adjacency[u, v])

    @cached_property
    def edges(self) -> frozenset[Edge]:
        us, vs = np.nonzero(np.triu(self.adjacency, k=1))
        return frozenset(zip(us.tolist(), vs.tolist()))

    def point(self, node: int) -> Point:
        x, y = self.positions[node]
        return Point(float(x), float(y))

    def __repr__(self) -> str:
        return f"StaticGraph(t={self.time}, nodes={self.node_count}, edges={len(self.edges)})"


def build_static_graph(positions: PositionsLike, range: float, time: float = 0.0) -> StaticGraph:
    """Snapshot the topology: (u, v) is an edge iff |p_u - p_v| <= range.

    Squared distances are compared against ``range**2`` so the boundary case is
    decided without a square root.
    """
    if not np.isfinite(range) or range <= 0:
        raise ValueError(f"transmission range must be positive and finite, got {range!r}")
    pts = _as_array(positions)
    if not np.all(np.isfinite(pts)):
        raise ValueError("positions contain non-finite coordinates")
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dy = pts[:, 1][:, None] - pts[:, 1][None, :]
    adj = dx * dx + dy * dy <= range * range
    np.fill_diagonal(adj, False)
    return StaticGraph(float(time), pts.copy(), float(range), adj)


def edges_alive(tree_edges: Iterable[Edge], graph: StaticGraph) -> bool:
    adj = graph.adjacency
    return all(adj[u, v] for u, v in tree_edges)
