"""Snapshot-driven multicast sessions under the least-overhead reuse policy.

A tree found at some instant is kept for as long as all of its edges survive.
The instant an edge dies (or at the first instant when there is no tree) the
configured algorithm is run again on the current snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import StaticGraph, build_static_graph, edges_alive
from .mobility import NodeTrace, positions_at
from .trees import (
    MulticastGroup,
    MulticastTree,
    SteinerAudit,
    TreeKind,
    build_tree,
    kou_steiner_tree,
    min_hop_tree,
    tree_hop_counts,
)


@dataclass(frozen=True)
class SessionConfig:
    snapshot_interval: float
    duration: float
    algorithm: TreeKind
    group: MulticastGroup

    def __post_init__(self):
        object.__setattr__(self, "algorithm", TreeKind(self.algorithm))
        if self.snapshot_interval <= 0:
            raise ValueError("snapshot_interval must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        steps = self.duration / self.snapshot_interval
        if not math.isclose(steps, round(steps), rel_tol=0, abs_tol=1e-9):
            raise ValueError("duration must be a multiple of snapshot_interval")

    @property
    def instant_count(self) -> int:
        return round(self.duration / self.snapshot_interval)


def instant_times(snapshot_interval: float, duration: float) -> np.ndarray:
    """Instants 0, dt, 2dt, ... strictly before ``duration``."""
    return np.arange(round(duration / snapshot_interval)) * snapshot_interval


@dataclass
class SessionMetrics:
    """Per-session accumulators.

    Edge and hop accumulators are kept as integer instant counts; the
    ``*_time_product`` properties scale them by the snapshot interval.
    ``schedule[k]`` is the index into ``trees`` of the tree in use at instant
    k, or -1 when the group could not be connected.
    """

    algorithm: TreeKind
    snapshot_interval: float
    receivers: tuple[int, ...]
    total_instants: int = 0
    connected_instants: int = 0
    lifetime_instants: list[int] = field(default_factory=list)
    edge_instants: int = 0
    hop_instants: dict[int, int] = field(default_factory=dict)
    trees: list[MulticastTree] = field(default_factory=list)
    schedule: list[int] = field(default_factory=list)

    @property
    def discovery_count(self) -> int:
        return len(self.trees)

    @property
    def connected_time(self) -> float:
        return self.connected_instants * self.snapshot_interval

    @property
    def tree_lifetimes(self) -> list[float]:
        return [n * self.snapshot_interval for n in self.lifetime_instants]

    @property
    def edge_time_product(self) -> float:
        return self.edge_instants * self.snapshot_interval

    @property
    def hop_time_product(self) -> dict[int, float]:
        return {r: n * self.snapshot_interval for r, n in self.hop_instants.items()}


def connectivity_percent(m: SessionMetrics) -> float:
    if m.total_instants <= 0:
        raise ValueError("session has no instants")
    return 100.0 * m.connected_instants / m.total_instants


def mean_tree_lifetime(m: SessionMetrics) -> Optional[float]:
    if not m.lifetime_instants:
        return None
    return m.snapshot_interval * sum(m.lifetime_instants) / len(m.lifetime_instants)


def time_averaged_edges(m: SessionMetrics) -> Optional[float]:
    if m.connected_instants == 0:
        return None
    return m.edge_instants / m.connected_instants


def time_averaged_hops(m: SessionMetrics) -> Optional[float]:
    if m.connected_instants == 0:
        return None
    per_receiver = [m.hop_instants[r] / m.connected_instants for r in m.receivers]
    return sum(per_receiver) / len(per_receiver)


class LoraSession:
    """Incremental session: feed one snapshot per instant, then ``close()``."""

    def __init__(self, config: SessionConfig, audit: Optional[SteinerAudit] = None):
        self.config = config
        self.audit = audit
        self.metrics = SessionMetrics(
            config.algorithm, config.snapshot_interval, config.group.receivers,
            hop_instants={r: 0 for r in config.group.receivers},
        )
        self._tree: Optional[MulticastTree] = None
        self._hops: dict[int, int] = {}
        self._installed_at = 0
        self._closed = False

    def _retire(self, instant: int) -> None:
        if self._tree is not None:
            self.metrics.lifetime_instants.append(instant - self._installed_at)
            self._tree = None

    def step(self, graph: StaticGraph) -> Optional[MulticastTree]:
        m = self.metrics
        k = m.total_instants
        m.total_instants += 1
        if self._tree is not None and not edges_alive(self._tree.edges, graph):
            self._retire(k)
        if self._tree is None:
            tree = build_tree(self.config.algorithm, graph, self.config.group, self.audit)
            if tree is not None:
                self._tree = tree
                self._hops = tree_hop_counts(tree, self.config.group)
                self._installed_at = k
                m.trees.append(tree)
        if self._tree is None:
            m.schedule.append(-1)
            return None
        m.schedule.append(len(m.trees) - 1)
        m.connected_instants += 1
        m.edge_instants += len(self._tree.edges)
        for r, h in self._hops.items():
            m.hop_instants[r] += h
        return self._tree

    def close(self) -> SessionMetrics:
        if not self._closed:
            self._retire(self.metrics.total_instants)
            self._closed = True
        return self.metrics


def validate_traces(traces: Sequence[NodeTrace], duration: float, group: Optional[MulticastGroup] = None) -> None:
    for i, trace in enumerate(traces):
        if trace.node_id != i:
            raise ValueError(f"trace {i} has node_id {trace.node_id}; ids must be dense and ordered")
        if trace.duration < duration:
            raise ValueError(f"trace for node {i} covers {trace.duration}s, session needs {duration}s")
    if group is not None:
        group.check(len(traces))


def snapshots(
    traces: Sequence[NodeTrace],
    range: float,
    snapshot_interval: float,
    duration: float,
    chunk: int = 512,
) -> Iterator[StaticGraph]:
    """Static graphs at every session instant, sampled in chunks to bound memory."""
    times = instant_times(snapshot_interval, duration)
    for lo in np.arange(0, len(times), chunk):
        block = times[lo:lo + chunk]
        positions = positions_at(traces, block)
        for t, pos in zip(block, positions):
            yield build_static_graph(pos, range, float(t))


def run_session(
    traces: Sequence[NodeTrace],
    range: float,
    config: SessionConfig,
    audit: Optional[SteinerAudit] = None,
) -> SessionMetrics:
    validate_traces(traces, config.duration, config.group)
    session = LoraSession(config, audit)
    for graph in snapshots(traces, range, config.snapshot_interval, config.duration):
        session.step(graph)
    return session.close()


@dataclass
class DominanceReport:
    """Per-snapshot comparison of freshly built min-hop and min-edge trees."""

    instants: int = 0
    compared: int = 0
    edge_violations: int = 0
    hop_violations: int = 0
    audit: SteinerAudit = field(default_factory=SteinerAudit)
    examples: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.edge_violations + self.hop_violations

    def record(self, graph: StaticGraph, group: MulticastGroup) -> None:
        self.instants += 1
        hop_tree = min_hop_tree(graph, group)
        edge_tree = kou_steiner_tree(graph, group, self.audit)
        if hop_tree is None or edge_tree is None:
            return
        self.compared += 1
        bad_edges = len(edge_tree.edges) > len(hop_tree.edges)
        hop_hops = tree_hop_counts(hop_tree, group)
        edge_hops = tree_hop_counts(edge_tree, group)
        bad_hops = any(hop_hops[r] > edge_hops[r] for r in group.receivers)
        self.edge_violations += bad_edges
        self.hop_violations += bad_hops
        if (bad_edges or bad_hops) and len(self.examples) < 5:
            self.examples.append({
                "time": graph.time,
                "group": list(group.members),
                "min_hop_edges": len(hop_tree.edges),
                "min_edge_edges": len(edge_tree.edges),
                "positions": graph.positions.tolist(),
            })

    def merge(self, other: "DominanceReport") -> None:
        self.instants += other.instants
        self.compared += other.compared
        self.edge_violations += other.edge_violations
        self.hop_violations += other.hop_violations
        self.audit.merge(other.audit)
        self.examples.extend(other.examples[: max(0, 5 - len(self.examples))])


def paired_diagnostic(
    traces: Sequence[NodeTrace],
    range: float,
    group: MulticastGroup,
    snapshot_interval: float,
    duration: float,
) -> DominanceReport:
    """Build both trees on every snapshot and count dominance violations."""
    validate_traces(traces, duration, group)
    report = DominanceReport()
    for graph in snapshots(traces, range, snapshot_interval, duration):
        report.record(graph, group)
    return report
