"""Seeded property suites with oracles kept apart from the production paths.

The shortest-path, connectivity and interpolation routines here are written
from scratch on purpose; reusing the production versions would let a shared
bug pass its own check.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .geometry import build_static_graph
from .mobility import (
    EAST,
    MobilityConfig,
    Model,
    NodeTrace,
    generate_random_waypoint,
    generate_traces,
    manhattan_next_heading,
    node_rng,
    positions_at,
    turn_left,
    turn_right,
)
from .session import SessionConfig, SessionMetrics, run_session
from .trees import (
    MulticastGroup,
    TreeKind,
    bfs,
    exact_steiner_oracle,
    kou_steiner_tree,
)

MAX_FAILURES_KEPT = 10


@dataclass
class PropertyReport:
    name: str
    instances: int = 0
    failures: list[dict] = field(default_factory=list)
    failure_count: int = 0
    elapsed: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failure_count == 0

    def fail(self, payload: dict) -> None:
        self.failure_count += 1
        if len(self.failures) < MAX_FAILURES_KEPT:
            self.failures.append(payload)

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.instances} instances, {self.failure_count} failures ({self.elapsed:.1f}s)"


# --- independent graph routines -------------------------------------------

def oracle_adjacency(positions: Sequence[Sequence[float]], tx_range: float) -> list[list[int]]:
    n = len(positions)
    r2 = tx_range * tx_range
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        xi, yi = positions[i]
        for j in range(i + 1, n):
            dx = xi - positions[j][0]
            dy = yi - positions[j][1]
            if dx * dx + dy * dy <= r2:
                adj[i].append(j)
                adj[j].append(i)
    return adj


def dijkstra(adj: Sequence[Sequence[int]], source: int) -> dict[int, float]:
    """Unit-weight Dijkstra; unreachable nodes are absent from the result."""
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v in adj[u]:
            nd = d + 1.0
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _reachable(adj_of: Callable[[int], Sequence[int]], start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj_of(u):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def _edge_alive(positions, u: int, v: int, tx_range: float) -> bool:
    dx = positions[u][0] - positions[v][0]
    dy = positions[u][1] - positions[v][1]
    return dx * dx + dy * dy <= tx_range * tx_range


def _tree_check(edges, group: MulticastGroup) -> Optional[str]:
    """None when ``edges`` is a tree containing every member, else the reason."""
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    nodes = set(adj) | {group.source}
    if len(edges) != len(nodes) - 1:
        return f"{len(edges)} edges over {len(nodes)} nodes"
    if _reachable(lambda u: adj.get(u, ()), group.source) != nodes:
        return "not connected"
    missing = set(group.members) - nodes
    if missing:
        return f"members {sorted(missing)} missing"
    return None


def _tree_hops(edges, group: MulticastGroup) -> dict[int, float]:
    nodes = {u for e in edges for u in e} | {group.source}
    index = {v: i for i, v in enumerate(sorted(nodes))}
    adj: list[list[int]] = [[] for _ in index]
    for u, v in edges:
        adj[index[u]].append(index[v])
        adj[index[v]].append(index[u])
    dist = dijkstra(adj, index[group.source])
    return {r: dist[index[r]] for r in group.receivers}


def random_positions(rng: np.random.Generator, n: int, side: float) -> list[tuple[float, float]]:
    return [(float(x), float(y)) for x, y in rng.uniform(0, side, size=(n, 2))]


def _shrink(positions: list, keep: set[int], still_fails: Callable[[list, dict], bool]) -> tuple[list, dict]:
    """Greedily delete non-kept vertices while the failure persists.

    Returns the reduced positions and the old-id -> new-id mapping.
    """
    alive = list(range(len(positions)))
    changed = True
    while changed:
        changed = False
        for v in list(alive):
            if v in keep:
                continue
            trial = [u for u in alive if u != v]
            mapping = {u: i for i, u in enumerate(trial)}
            if still_fails([positions[u] for u in trial], mapping):
                alive = trial
                changed = True
    mapping = {u: i for i, u in enumerate(alive)}
    return [positions[u] for u in alive], mapping


# --- suites -----------------------------------------------------------------

def check_bfs_vs_dijkstra(instance_count: int = 500, seed: int = 0, tx_range: float = 250.0) -> PropertyReport:
    report = PropertyReport("bfs_vs_dijkstra")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)

    def mismatch(positions, source) -> bool:
        graph = build_static_graph(positions, tx_range)
        got = bfs(graph, source).distance
        want = dijkstra(oracle_adjacency(positions, tx_range), source)
        return set(got) != set(want) or any(got[v] != want[v] for v in want)

    for i in range(instance_count):
        n = int(rng.integers(1, 41))
        positions = random_positions(rng, n, float(rng.uniform(200, 1500)))
        source = int(rng.integers(0, n))
        report.instances += 1
        if mismatch(positions, source):
            small, mapping = _shrink(positions, {source}, lambda p, m: mismatch(p, m[source]))
            report.fail({"instance": i, "seed": seed, "range": tx_range, "source": mapping[source],
                         "positions": small})
    report.elapsed = time.perf_counter() - started
    return report


def check_steiner_bound(instance_count: int = 200, seed: int = 0, tx_range: float = 250.0) -> PropertyReport:
    """OPT <= heuristic <= 2 (1 - 1/|MG|) OPT, and the heuristic output is a
    valid tree over live edges. Only instances where the group is connected
    count toward ``instances``; the others must return no tree."""
    report = PropertyReport("steiner_bound")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)

    def problem(positions, group) -> Optional[str]:
        graph = build_static_graph(positions, tx_range)
        opt = exact_steiner_oracle(graph, group)
        tree = kou_steiner_tree(graph, group)
        if opt is None or tree is None:
            return None if opt is None and tree is None else f"connectivity mismatch: opt={opt} tree={tree}"
        reason = _tree_check(tree.edges, group)
        if reason:
            return reason
        if any(not _edge_alive(positions, u, v, tx_range) for u, v in tree.edges):
            return "tree uses a non-edge"
        cost = len(tree.edges)
        bound = 2 * (1 - 1 / len(group.members)) * opt
        if not opt <= cost <= bound + 1e-12:
            return f"cost {cost} outside [{opt}, {bound}]"
        return None

    attempts = 0
    while report.instances < instance_count:
        attempts += 1
        n = int(rng.integers(2, 11))
        positions = random_positions(rng, n, float(rng.uniform(250, 700)))
        k = int(rng.integers(2, min(5, n) + 1))
        members = rng.choice(n, size=k, replace=False)
        group = MulticastGroup(int(members[0]), tuple(int(m) for m in members[1:]))
        graph = build_static_graph(positions, tx_range)
        reason = problem(positions, group)
        if exact_steiner_oracle(graph, group) is not None:
            report.instances += 1
        if reason:
            def still(p, m, g=group):
                return problem(p, MulticastGroup(m[g.source], tuple(m[r] for r in g.receivers))) is not None
            small, mapping = _shrink(positions, set(group.members), still)
            report.fail({"attempt": attempts, "seed": seed, "reason": reason, "positions": small,
                         "source": mapping[group.source],
                         "receivers": [mapping[r] for r in group.receivers]})
    report.notes["attempts"] = attempts
    report.elapsed = time.perf_counter() - started
    return report


def _oracle_position(trace: NodeTrace, t: float) -> tuple[float, float]:
    wps = trace.waypoints
    i = 0
    while i + 1 < len(wps) and wps[i + 1].depart_time <= t:
        i += 1
    wp = wps[i]
    if i + 1 < len(wps):
        end = wps[i + 1].depart_time
    elif wp.speed > 0:
        end = wp.depart_time + wp.length / wp.speed
    else:
        return wp.end
    if end <= wp.depart_time:
        return wp.end
    f = min(max((t - wp.depart_time) / (end - wp.depart_time), 0.0), 1.0)
    return (wp.start.x + f * (wp.end.x - wp.start.x), wp.start.y + f * (wp.end.y - wp.start.y))


def replay_session(
    traces: Sequence[NodeTrace],
    tx_range: float,
    config: SessionConfig,
    metrics: SessionMetrics,
    position_tolerance: float = 1e-6,
) -> PropertyReport:
    """Re-walk every instant and check the recorded schedule and accumulators.

    Positions are re-derived here by a separate interpolation, so edges whose
    length is within ``position_tolerance`` of the range are treated as
    undecidable rather than as failures.
    """
    report = PropertyReport("session_replay")
    started = time.perf_counter()
    group = config.group
    dt = config.snapshot_interval
    n_instants = config.instant_count
    sched = metrics.schedule
    trees = metrics.trees

    def fail(k, what, **extra):
        report.fail({"instant": k, "time": None if k is None else k * dt, "check": what, **extra})

    if len(sched) != n_instants or metrics.total_instants != n_instants:
        fail(None, "instant count", recorded=len(sched), expected=n_instants)
        report.elapsed = time.perf_counter() - started
        return report

    def edge_state(positions, u, v) -> Optional[bool]:
        dx = positions[u][0] - positions[v][0]
        dy = positions[u][1] - positions[v][1]
        d = math.sqrt(dx * dx + dy * dy)
        if abs(d - tx_range) <= position_tolerance:
            return None
        return d < tx_range

    seen_tree = -1
    edge_sum = 0
    hop_sums = {r: 0.0 for r in group.receivers}
    runs: list[int] = []
    for k in range(n_instants):
        t = k * dt
        positions = [_oracle_position(tr, t) for tr in traces]
        # graphs at tx_range -/+ tolerance bracket every decision near the boundary
        adj_lo = oracle_adjacency(positions, tx_range - position_tolerance)
        adj_hi = oracle_adjacency(positions, tx_range + position_tolerance)
        connectable = set(group.receivers) <= _reachable(lambda u: adj_lo[u], group.source)
        s = sched[k]
        prev = sched[k - 1] if k else -1
        prev_alive = None
        if prev >= 0:
            states = [edge_state(positions, u, v) for u, v in trees[prev].edges]
            prev_alive = False if False in states else (None if None in states else True)
        report.instances += 1
        if s >= 0:
            tree = trees[s]
            reason = _tree_check(tree.edges, group)
            if reason:
                fail(k, "treeness", reason=reason)
            if any(edge_state(positions, u, v) is False for u, v in tree.edges):
                fail(k, "tree uses a dead edge")
            hops = _tree_hops(tree.edges, group)
            edge_sum += len(tree.edges)
            for r in group.receivers:
                hop_sums[r] += hops[r]
            if s == prev:
                runs[-1] += 1
            else:
                runs.append(1)
                if s != seen_tree + 1:
                    fail(k, "tree index out of order", index=s)
                seen_tree = s
                if prev_alive is True:
                    fail(k, "spurious recomputation")
                if config.algorithm is TreeKind.MIN_HOP:
                    shortest = dijkstra(adj_hi, group.source)
                    longest = dijkstra(adj_lo, group.source)
                    if any(not shortest[r] <= hops[r] <= longest.get(r, math.inf) for r in group.receivers):
                        fail(k, "fresh min-hop tree not hop-optimal")
        else:
            if connectable:
                fail(k, "group connectable but no tree")
            if prev_alive is True:
                fail(k, "live tree dropped")
    if metrics.lifetime_instants != runs:
        fail(None, "lifetime partition", recorded=metrics.lifetime_instants, replayed=runs)
    if sum(runs) > n_instants or any(r <= 0 for r in runs):
        fail(None, "lifetime bounds")
    connected = sum(1 for s in sched if s >= 0)
    if metrics.connected_instants != connected:
        fail(None, "connected instants", recorded=metrics.connected_instants, replayed=connected)
    if not math.isclose(metrics.connected_time, sum(runs) * dt, rel_tol=0, abs_tol=1e-9):
        fail(None, "connected time vs lifetimes")
    if metrics.edge_instants != edge_sum:
        fail(None, "edge accumulator", recorded=metrics.edge_instants, replayed=edge_sum)
    if any(metrics.hop_instants[r] != hop_sums[r] for r in group.receivers):
        fail(None, "hop accumulator")
    if metrics.discovery_count != len(runs):
        fail(None, "discovery count")
    report.elapsed = time.perf_counter() - started
    return report


def check_session_replays(instance_count: int = 50, seed: int = 0, tx_range: float = 250.0) -> PropertyReport:
    report = PropertyReport("session_replay")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    models = list(Model)
    for i in range(instance_count):
        model = models[i % len(models)]
        nodes = int(rng.integers(10, 31))
        v_max = float(rng.choice([5.0, 25.0, 50.0]))
        duration = float(rng.integers(20, 61))
        mcfg = MobilityConfig(model, v_max=v_max, duration=duration, node_count=nodes,
                              seed=int(rng.integers(0, 2**63)))
        traces = generate_traces(mcfg)
        members = rng.choice(nodes, size=int(rng.integers(2, min(8, nodes) + 1)), replace=False)
        group = MulticastGroup(int(members[0]), tuple(int(m) for m in members[1:]))
        algorithm = TreeKind.MIN_HOP if i % 2 == 0 else TreeKind.MIN_EDGE
        scfg = SessionConfig(0.25, duration, algorithm, group)
        metrics = run_session(traces, tx_range, scfg)
        sub = replay_session(traces, tx_range, scfg, metrics)
        report.instances += 1
        if not sub.ok:
            report.fail({"session": i, "mobility": repr(mcfg), "group": list(group.members),
                         "algorithm": algorithm.value, "failures": sub.failures})
    report.elapsed = time.perf_counter() - started
    return report


def manhattan_turn_frequencies(decisions: int = 100_000, seed: int = 0,
                               grid_shape: tuple[int, int] = (10, 10)) -> dict[str, float]:
    """Empirical straight/left/right shares for an eastbound node mid-grid."""
    rng = node_rng(seed, 0)
    mid = (grid_shape[0] // 2, grid_shape[1] // 2)
    counts = {"straight": 0, "left": 0, "right": 0}
    names = {EAST: "straight", turn_left(EAST): "left", turn_right(EAST): "right"}
    for _ in range(decisions):
        counts[names[manhattan_next_heading(rng, mid, EAST, grid_shape)]] += 1
    return {k: v / decisions for k, v in counts.items()}


def sample_positions(config: MobilityConfig, samples: int, seed: int = 0):
    """Positions of all nodes at ``samples`` sorted instants in [0, duration]."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, config.duration, size=samples))
    return times, positions_at(generate_traces(config), times)


def check_mobility_statistics(model: Model, config: Optional[MobilityConfig] = None,
                              samples: int = 10_000, decisions: int = 100_000,
                              seed: int = 0) -> PropertyReport:
    """Containment, speed bound, and model-specific distribution checks."""
    model = Model(model)
    config = config or MobilityConfig(model, v_max=25.0, duration=1000.0, node_count=10, seed=seed)
    report = PropertyReport(f"mobility_{model.value}")
    started = time.perf_counter()

    times, pos = sample_positions(config, samples, seed)
    report.instances += samples
    xs, ys = pos[..., 0], pos[..., 1]
    outside = (xs < 0) | (xs > config.width) | (ys < 0) | (ys > config.height)
    if outside.any():
        k, j = np.argwhere(outside)[0]
        report.fail({"check": "containment", "time": float(times[k]), "node": int(j),
                     "position": pos[k, j].tolist()})
    if model.is_grid:
        L = config.block_length
        on_x = np.isclose(np.mod(xs + L / 2, L) - L / 2, 0, atol=1e-9)
        on_y = np.isclose(np.mod(ys + L / 2, L) - L / 2, 0, atol=1e-9)
        off = ~(on_x | on_y)
        if off.any():
            k, j = np.argwhere(off)[0]
            report.fail({"check": "on street", "time": float(times[k]), "node": int(j),
                         "position": pos[k, j].tolist()})
    step = np.hypot(np.diff(xs, axis=0), np.diff(ys, axis=0))
    limit = config.v_max * np.diff(times)[:, None] * (1 + 1e-9) + 1e-9
    if (step > limit).any():
        k, j = np.argwhere(step > limit)[0]
        report.fail({"check": "speed bound", "time": float(times[k]), "node": int(j),
                     "displacement": float(step[k, j]), "limit": float(limit[k, 0])})
    report.notes["max_rate"] = float((step / np.diff(times)[:, None]).max()) if len(times) > 1 else 0.0

    if model is Model.MANHATTAN:
        freq = manhattan_turn_frequencies(decisions, seed)
        report.instances += decisions
        report.notes["turn_frequencies"] = freq
        for name, want in (("straight", 0.5), ("left", 0.25), ("right", 0.25)):
            if abs(freq[name] - want) > 0.01:
                report.fail({"check": "turn frequency", "direction": name, "observed": freq[name]})
        corner_rng = node_rng(seed, 1)
        nx, ny = config.grid_shape
        # westbound along the top edge reaching the north-west corner: only south remains
        forced = {manhattan_next_heading(corner_rng, (0, ny), 2, (nx, ny)) for _ in range(1000)}
        if forced != {3}:
            report.fail({"check": "corner forced move", "observed": sorted(forced)})
    elif model is Model.RANDOM_WAYPOINT:
        # leg targets from enough nodes to reach ~samples targets
        targets = []
        node = 0
        while len(targets) < samples:
            trace = generate_random_waypoint(config, node)
            targets.extend((w.end.x, w.end.y) for w in trace.waypoints if w.speed > 0)
            node += 1
        targets = np.array(targets[:samples])
        counts, _, _ = np.histogram2d(targets[:, 0], targets[:, 1], bins=10,
                                      range=[[0, config.width], [0, config.height]])
        chi2, p = stats.chisquare(counts.ravel())
        report.notes["target_chi2_p"] = float(p)
        if p < 0.001:
            report.fail({"check": "target uniformity", "chi2": float(chi2), "p": float(p)})
    report.elapsed = time.perf_counter() - started
    return report


def run_all(seed: int = 0) -> list[PropertyReport]:
    reports = [
        check_bfs_vs_dijkstra(500, seed),
        check_steiner_bound(200, seed),
        check_session_replays(50, seed),
    ]
    reports += [check_mobility_statistics(m, seed=seed) for m in Model]
    return reports
