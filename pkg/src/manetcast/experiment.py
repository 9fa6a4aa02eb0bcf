"""Experiment matrix: mobility model x nodes x v_max x receivers x algorithm x run.

Seeding
-------
Every random draw comes from a seed derived by :func:`derive_seed`, the first
8 bytes (big endian) of BLAKE2b over the ``|``-joined canonical key string:

* traces: ``trace|base_seed|model|nodes|v_max|width|height|duration|block_length|run``
* groups: ``group|base_seed|model|nodes|v_max|receivers|run``

Traces are therefore shared by every receiver count and both algorithms of a
(model, nodes, v_max, run) combination, and each group is shared by the two
algorithms, so MinHop/MinEdge comparisons are paired.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mobility import MobilityConfig, Model, NodeTrace, format_trace, generate_traces
from .session import (
    DominanceReport,
    LoraSession,
    SessionConfig,
    connectivity_percent,
    mean_tree_lifetime,
    snapshots,
    time_averaged_edges,
    time_averaged_hops,
)
from .trees import MulticastGroup, SteinerAudit, TreeKind

log = logging.getLogger(__name__)

METRICS = ("connectivity_pct", "lifetime_s", "edges_per_tree", "hops_per_receiver")
METRIC_LABELS = {
    "connectivity_pct": "Tree connectivity (%)",
    "lifetime_s": "Lifetime per tree (s)",
    "edges_per_tree": "Edges per tree",
    "hops_per_receiver": "Hops per source-receiver path",
}
ALGORITHMS = (TreeKind.MIN_HOP, TreeKind.MIN_EDGE)


def _canon(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def derive_seed(*parts) -> int:
    key = "|".join(_canon(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


@dataclass
class ExperimentConfig:
    models: list[Model] = field(default_factory=lambda: list(Model))
    node_counts: list[int] = field(default_factory=lambda: [50, 100])
    v_max_values: list[float] = field(default_factory=lambda: [5.0, 25.0, 50.0])
    receiver_counts: list[int] = field(default_factory=lambda: [3, 10, 18])
    runs_per_cell: int = 5
    width: float = 1000.0
    height: float = 1000.0
    range: float = 250.0
    snapshot_interval: float = 0.25
    duration: float = 1000.0
    block_length: float = 100.0
    base_seed: int = 0

    def __post_init__(self):
        self.models = [Model(m) for m in self.models]
        self.node_counts = [int(n) for n in self.node_counts]
        self.v_max_values = [float(v) for v in self.v_max_values]
        self.receiver_counts = [int(r) for r in self.receiver_counts]
        for name in ("width", "height", "range", "snapshot_interval", "duration", "block_length"):
            setattr(self, name, float(getattr(self, name)))
        self.runs_per_cell = int(self.runs_per_cell)
        self.base_seed = int(self.base_seed)
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")
        for n in self.node_counts:
            for r in self.receiver_counts:
                if r < 1 or r >= n:
                    raise ValueError(f"receiver count {r} invalid for {n} nodes (need 1 <= receivers < nodes)")
        # surfaces bad interval/duration combinations before any work is queued
        SessionConfig(self.snapshot_interval, self.duration, TreeKind.MIN_HOP, MulticastGroup(0, (1,)))

    def mobility_config(self, model: Model, nodes: int, v_max: float, run: int) -> MobilityConfig:
        seed = derive_seed("trace", self.base_seed, model, nodes, v_max, self.width, self.height,
                           self.duration, self.block_length, run)
        return MobilityConfig(model, self.width, self.height, 0.0, v_max, 0.0, self.block_length,
                              self.duration, nodes, seed)

    def group_seed(self, model: Model, nodes: int, v_max: float, receivers: int, run: int) -> int:
        return derive_seed("group", self.base_seed, model, nodes, v_max, receivers, run)


_LIST_FIELDS = {"models", "node_counts", "v_max_values", "receiver_counts"}


def load_config(path: str | Path, section: str = "experiment") -> dict:
    """Read ``[experiment]`` key = value pairs; lists are comma separated."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    if section not in parser:
        raise ValueError(f"{path}: missing [{section}] section")
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in parser[section].items():
        if key not in known:
            raise ValueError(f"{path}: unknown key {key!r}")
        values[key] = [s.strip() for s in raw.split(",") if s.strip()] if key in _LIST_FIELDS else raw
    return values


def select_group(node_count: int, receiver_count: int, rng: np.random.Generator) -> MulticastGroup:
    if not 1 <= receiver_count < node_count:
        raise ValueError("need 1 <= receiver_count < node_count")
    picks = rng.choice(node_count, size=receiver_count + 1, replace=False)
    return MulticastGroup(int(picks[0]), tuple(int(p) for p in picks[1:]))


def metric_values(m) -> tuple[Optional[float], ...]:
    return (connectivity_percent(m), mean_tree_lifetime(m), time_averaged_edges(m), time_averaged_hops(m))


@dataclass(frozen=True, order=True)
class CellKey:
    model: str
    nodes: int
    v_max: float
    receivers: int
    algorithm: str


@dataclass
class RunRecord:
    key: CellKey
    run: int
    values: tuple[Optional[float], ...]
    checksum: str


@dataclass
class CellResult:
    key: CellKey
    runs: list[tuple[Optional[float], ...]]
    checksums: list[str]

    def present(self, metric: str) -> list[float]:
        i = METRICS.index(metric)
        return [r[i] for r in self.runs if r[i] is not None]

    def absent(self, metric: str) -> int:
        return len(self.runs) - len(self.present(metric))

    def mean(self, metric: str) -> Optional[float]:
        vals = self.present(metric)
        return statistics.mean(vals) if vals else None

    def stddev(self, metric: str) -> Optional[float]:
        vals = self.present(metric)
        return statistics.stdev(vals) if len(vals) > 1 else None


@dataclass
class UnitOutcome:
    records: list[RunRecord]
    audit: SteinerAudit
    dominance: Optional[DominanceReport]
    mobility: tuple


def _run_unit(args) -> UnitOutcome:
    config, model, nodes, v_max, run, paired = args
    mcfg = config.mobility_config(model, nodes, v_max, run)
    traces = generate_traces(mcfg)
    trace_text = format_trace(mcfg, traces)
    audit = SteinerAudit()
    sessions = []
    groups = {}
    for receivers in config.receiver_counts:
        rng = np.random.default_rng(config.group_seed(model, nodes, v_max, receivers, run))
        group = select_group(nodes, receivers, rng)
        groups[receivers] = group
        for alg in ALGORITHMS:
            scfg = SessionConfig(config.snapshot_interval, config.duration, alg, group)
            sessions.append((receivers, alg, LoraSession(scfg, audit if alg is TreeKind.MIN_EDGE else None)))
    dominance = DominanceReport() if paired else None
    for graph in snapshots(traces, config.range, config.snapshot_interval, config.duration):
        for _, _, session in sessions:
            session.step(graph)
        if dominance is not None:
            for group in groups.values():
                dominance.record(graph, group)
    records = []
    for receivers, alg, session in sessions:
        group = groups[receivers]
        checksum = hashlib.sha256(
            (trace_text + f"group {group.source} {' '.join(map(str, group.receivers))}\n").encode()
        ).hexdigest()[:16]
        key = CellKey(model.value, nodes, v_max, receivers, alg.value)
        records.append(RunRecord(key, run, metric_values(session.close()), checksum))
    log.debug("finished %s n=%d v=%s run=%d", model, nodes, v_max, run)
    return UnitOutcome(records, audit, dominance, (model.value, nodes, v_max, run))


@dataclass
class MatrixResult:
    cells: list[CellResult]
    audit: SteinerAudit
    audit_by_model: dict[str, SteinerAudit]
    dominance: Optional[DominanceReport]


def run_matrix(config: ExperimentConfig, jobs: int = 1, paired_diagnostic: bool = False) -> MatrixResult:
    units = [
        (config, model, nodes, v_max, run, paired_diagnostic)
        for model in config.models
        for nodes in config.node_counts
        for v_max in config.v_max_values
        for run in range(config.runs_per_cell)
    ]
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_unit, units))
    else:
        outcomes = [_run_unit(u) for u in units]
    outcomes.sort(key=lambda o: o.mobility)

    grouped: dict[CellKey, list[RunRecord]] = {}
    audit = SteinerAudit()
    by_model: dict[str, SteinerAudit] = {}
    dominance = DominanceReport() if paired_diagnostic else None
    for outcome in outcomes:
        for rec in outcome.records:
            grouped.setdefault(rec.key, []).append(rec)
        audit.merge(outcome.audit)
        by_model.setdefault(outcome.mobility[0], SteinerAudit()).merge(outcome.audit)
        if dominance is not None:
            dominance.merge(outcome.dominance)
    cells = []
    for key in sorted(grouped):
        recs = sorted(grouped[key], key=lambda r: r.run)
        cells.append(CellResult(key, [r.values for r in recs], [r.checksum for r in recs]))
    return MatrixResult(cells, audit, dict(sorted(by_model.items())), dominance)


# --- persistence -----------------------------------------------------------

def _num(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _parse_num(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def csv_header(run_count: int) -> list[str]:
    return (["model", "nodes", "v_max", "receivers", "algorithm", "metric", "mean", "stddev"]
            + [f"run{i + 1}" for i in range(run_count)] + ["absent_runs", "trace_checksums"])


def write_results(results: Sequence[CellResult], path: str | Path) -> Path:
    path = Path(path)
    run_count = max((len(c.runs) for c in results), default=0)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(run_count))
        for cell in sorted(results, key=lambda c: c.key):
            k = cell.key
            for i, metric in enumerate(METRICS):
                runs = [_num(r[i]) for r in cell.runs]
                runs += [""] * (run_count - len(runs))
                writer.writerow([k.model, k.nodes, _num(k.v_max), k.receivers, k.algorithm, metric,
                                 _num(cell.mean(metric)), _num(cell.stddev(metric)), *runs,
                                 cell.absent(metric), ";".join(cell.checksums)])
    return path


def read_results(path: str | Path) -> list[CellResult]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        run_cols = [c for c in (reader.fieldnames or []) if c.startswith("run") and c[3:].isdigit()]
        partial: dict[CellKey, dict] = {}
        for row in reader:
            key = CellKey(row["model"], int(row["nodes"]), float(row["v_max"]),
                          int(row["receivers"]), row["algorithm"])
            entry = partial.setdefault(key, {"checksums": row["trace_checksums"].split(";"), "metrics": {}})
            entry["metrics"][row["metric"]] = [_parse_num(row[c]) for c in run_cols]
    cells = []
    for key, entry in sorted(partial.items()):
        n = len(entry["checksums"])
        columns = [entry["metrics"][m][:n] for m in METRICS]
        cells.append(CellResult(key, [tuple(col[i] for col in columns) for i in range(n)], entry["checksums"]))
    return cells


def write_audit(result: MatrixResult, path: str | Path) -> Path:
    payload = {
        "steiner_audit": result.audit.as_dict(),
        "steiner_audit_by_model": {m: a.as_dict() for m, a in result.audit_by_model.items()},
        "steiner_audit_examples": result.audit.examples,
    }
    if result.dominance is not None:
        d = result.dominance
        payload["paired_diagnostic"] = {
            "instants": d.instants, "compared": d.compared,
            "edge_violations": d.edge_violations, "hop_violations": d.hop_violations,
            "examples": d.examples,
        }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_traces(config: ExperimentConfig, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for model in config.models:
        for nodes in config.node_counts:
            for v_max in config.v_max_values:
                for run in range(config.runs_per_cell):
                    mcfg = config.mobility_config(model, nodes, v_max, run)
                    path = out_dir / f"{model.value}_n{nodes}_v{v_max:g}_run{run + 1}.trace"
                    path.write_text(format_trace(mcfg, generate_traces(mcfg)), encoding="utf-8")
                    paths.append(path)
    return paths


def emit_charts(results: Sequence[CellResult], out_dir: str | Path) -> list[Path]:
    """One SVG per (metric, model, v_max): metric against receiver count,
    one line per (node count, algorithm)."""
    if not results:
        return []
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    combos = sorted({(c.key.model, c.key.v_max) for c in results})
    with matplotlib.rc_context({"svg.hashsalt": "manetcast", "svg.fonttype": "none"}):
        for metric in METRICS:
            for model, v_max in combos:
                subset = [c for c in results if c.key.model == model and c.key.v_max == v_max]
                fig, ax = plt.subplots(figsize=(5, 3.5))
                for nodes, alg in sorted({(c.key.nodes, c.key.algorithm) for c in subset}):
                    series = sorted((c.key.receivers, c.mean(metric)) for c in subset
                                    if c.key.nodes == nodes and c.key.algorithm == alg)
                    xs = [x for x, y in series if y is not None]
                    ys = [y for x, y in series if y is not None]
                    ax.plot(xs, ys, marker="o", label=f"{alg}, {nodes} nodes")
                ax.set_xlabel("Receivers per multicast group")
                ax.set_ylabel(METRIC_LABELS[metric])
                ax.set_title(f"{model}, v_max = {v_max:g} m/s")
                ax.legend(fontsize="small")
                fig.tight_layout()
                path = out_dir / f"{metric}_{model}_v{v_max:g}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                paths.append(path)
    return paths
