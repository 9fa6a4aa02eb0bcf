"""Acceptance criteria, each gated at its stated tolerance.

Every test appends one PASS/FAIL line to ``ACCEPTANCE_LINES``; the lines are
printed in a summary section at the end of the pytest run.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from manetcast.cli import main
from manetcast.experiment import ExperimentConfig, run_matrix, select_group
from manetcast.mobility import Model, generate_traces
from manetcast.session import SessionConfig, paired_diagnostic, run_session, time_averaged_edges
from manetcast.trees import MulticastGroup, TreeKind
from manetcast.verification import (
    check_bfs_vs_dijkstra,
    check_mobility_statistics,
    check_session_replays,
    check_steiner_bound,
)
from test_session import two_route_traces

pytestmark = pytest.mark.acceptance

CELL_SHARE = 0.90
PAIRED_SHARE = 0.95


def record(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, detail


def workload_config(**overrides) -> ExperimentConfig:
    values = dict(models=list(Model), node_counts=[50], v_max_values=[25.0],
                  receiver_counts=[3, 10, 18], runs_per_cell=5, duration=200.0,
                  snapshot_interval=0.25, base_seed=0)
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.fixture(scope="module")
def workload():
    cfg = workload_config()
    started = time.perf_counter()
    result = run_matrix(cfg, paired_diagnostic=True)
    elapsed = time.perf_counter() - started
    cells = {(c.key.model, c.key.receivers, c.key.algorithm): c for c in result.cells}
    return cfg, result, cells, elapsed


def paired(workload, metric):
    """(model, receivers) -> list of (MinHop, MinEdge) values per run."""
    cfg, _, cells, _ = workload
    i = ("connectivity_pct", "lifetime_s", "edges_per_tree", "hops_per_receiver").index(metric)
    out = {}
    for model in cfg.models:
        for r in cfg.receiver_counts:
            hop = cells[(model.value, r, "MinHop")].runs
            edge = cells[(model.value, r, "MinEdge")].runs
            out[(model.value, r)] = [(h[i], e[i]) for h, e in zip(hop, edge)]
    return out


def share(flags):
    flags = list(flags)
    return sum(flags) / len(flags), len(flags)


def cell_mean(pairs, side):
    vals = [p[side] for p in pairs if p[side] is not None]
    return sum(vals) / len(vals) if vals else None


def test_1_oracle_gates():
    started = time.perf_counter()
    reports = [check_bfs_vs_dijkstra(500, 0), check_steiner_bound(200, 0), check_session_replays(50, 0)]
    elapsed = time.perf_counter() - started
    failures = {r.name: r.failure_count for r in reports}
    ok = all(r.ok for r in reports) and [r.instances for r in reports] == [500, 200, 50] and elapsed < 120
    record("1 oracle gates", ok, f"failures {failures}, {elapsed:.1f}s (< 120s)")


def test_2_two_tree_worked_example():
    cfg = SessionConfig(0.25, 9.0, TreeKind.MIN_HOP, MulticastGroup(0, (10,)))
    m = run_session(two_route_traces(), 250.0, cfg)
    value = time_averaged_edges(m)
    ok = m.tree_lifetimes == [3.0, 6.0] and abs(value - 40 / 3) < 1e-12 and round(value, 1) == 13.3
    record("2 time-averaged edges", ok, f"lifetimes {m.tree_lifetimes}, edges {value!r}")


def test_3_dominance_at_18_receivers():
    cfg = workload_config()
    edge_v = hop_v = compared = 0
    for model in cfg.models:
        mcfg = cfg.mobility_config(model, 50, 25.0, 0)
        rng = np.random.default_rng(cfg.group_seed(model, 50, 25.0, 18, 0))
        group = select_group(50, 18, rng)
        d = paired_diagnostic(generate_traces(mcfg), cfg.range, group, cfg.snapshot_interval, cfg.duration)
        edge_v += d.edge_violations
        hop_v += d.hop_violations
        compared += d.compared
    record("3 dominance (50 nodes, v_max 25, 18 receivers, 200 s, each model)",
           edge_v == 0 and hop_v == 0 and compared > 0,
           f"{compared} snapshots compared, {edge_v} edge and {hop_v} hop violations")


def test_4a_min_hop_uses_more_edges(workload):
    data = paired(workload, "edges_per_tree")
    cells_ok, n_cells = share(cell_mean(p, 0) > cell_mean(p, 1) for p in data.values())
    runs_ok, n_runs = share(h > e for p in data.values() for h, e in p if h is not None and e is not None)
    excess = [cell_mean(p, 0) / cell_mean(p, 1) - 1 for p in data.values()]
    grand = sum(excess) / len(excess)
    ok = cells_ok >= CELL_SHARE and runs_ok >= PAIRED_SHARE and 0.05 <= grand <= 0.50
    record("4a edges MinHop > MinEdge", ok,
           f"cells {cells_ok:.0%} of {n_cells}, paired runs {runs_ok:.0%} of {n_runs}, grand excess {grand:.1%}")


def test_4b_min_edge_trees_live_longer(workload):
    data = paired(workload, "lifetime_s")
    cells_ok, n_cells = share(cell_mean(p, 1) > cell_mean(p, 0) for p in data.values())
    runs_ok, n_runs = share(e > h for p in data.values() for h, e in p if h is not None and e is not None)
    ok = cells_ok >= CELL_SHARE and runs_ok >= PAIRED_SHARE
    record("4b lifetime MinEdge > MinHop", ok, f"cells {cells_ok:.0%} of {n_cells}, paired runs {runs_ok:.0%} of {n_runs}")


def test_4c_connectivity_non_increasing_in_receivers(workload):
    cfg = workload[0]
    data = paired(workload, "connectivity_pct")
    steps = []
    detail = []
    for model in cfg.models:
        means = [cell_mean(data[(model.value, r)], 0) for r in cfg.receiver_counts]
        detail.append(f"{model.value} " + "/".join(f"{m:.1f}" for m in means))
        steps += [b <= a for a, b in zip(means, means[1:])]
    cells_ok, n_steps = share(steps)
    record("4c connectivity non-increasing", cells_ok >= CELL_SHARE,
           f"{cells_ok:.0%} of {n_steps} receiver-count steps ({'; '.join(detail)})")


def test_4d_min_hop_has_fewer_hops(workload):
    data = paired(workload, "hops_per_receiver")
    cells_ok, n_cells = share(cell_mean(p, 0) <= cell_mean(p, 1) for p in data.values())
    runs_ok, n_runs = share(h <= e for p in data.values() for h, e in p if h is not None and e is not None)
    elapsed = workload[3]
    ok = cells_ok >= CELL_SHARE and runs_ok >= PAIRED_SHARE and elapsed < 600
    record("4d hops MinHop <= MinEdge", ok,
           f"cells {cells_ok:.0%} of {n_cells}, paired runs {runs_ok:.0%} of {n_runs}; workload {elapsed:.0f}s")


def test_5_mobility_statistics():
    reports = [check_mobility_statistics(m, samples=10_000, decisions=100_000, seed=0) for m in Model]
    freq = reports[[m for m in Model].index(Model.MANHATTAN)].notes["turn_frequencies"]
    rates = {r.name: round(r.notes["max_rate"], 3) for r in reports}
    ok = all(r.ok for r in reports)
    record("5 mobility statistics", ok,
           f"turns {freq['straight']:.4f}/{freq['left']:.4f}/{freq['right']:.4f}, max rate {rates}, "
           f"failures {[f for r in reports for f in r.failures][:2]}")


def test_6_cli_determinism(tmp_path, capsys):
    args = ["--models", "RandomWaypoint,CitySection,Manhattan", "--node-counts", "30",
            "--v-max-values", "5,25", "--receiver-counts", "3,10", "--runs-per-cell", "2",
            "--duration", "50", "--base-seed", "11"]
    outs = []
    for i, jobs in enumerate(("1", "2", "1")):
        out = tmp_path / f"run{i}"
        assert main(["run", "--out", str(out), "--jobs", jobs, *args]) == 0
        outs.append((out / "results.csv").read_bytes())
    capsys.readouterr()
    ok = outs[0] == outs[1] == outs[2] and len(outs[0]) > 0
    record("6 determinism", ok, f"3 runs (--jobs 1, 2, 1) byte-identical: {ok}, {len(outs[0])} bytes")


def test_7_steiner_step_audit(workload):
    _, result, _, _ = workload
    sessions = result.audit
    snaps = result.dominance.audit
    ok = sessions.invalid == 0 and snaps.invalid == 0 and snaps.calls > 0
    record("7 steps 4/5 audit", ok,
           f"altered {snaps.altered} of {snaps.calls} snapshot trees, {sessions.altered} of {sessions.calls} "
           f"session trees; invalid {snaps.invalid + sessions.invalid}")
