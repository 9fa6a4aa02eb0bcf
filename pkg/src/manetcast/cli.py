"""Command line entry point: ``manetcast {generate-traces,run,report,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .experiment import (
    METRICS,
    ExperimentConfig,
    emit_charts,
    load_config,
    read_results,
    run_matrix,
    write_audit,
    write_results,
    write_traces,
)

log = logging.getLogger("manetcast")


def _csv_list(cast):
    def parse(text: str):
        return [cast(part) for part in text.split(",") if part.strip()]
    return parse


def _add_matrix_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with an [experiment] section")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--models", type=_csv_list(str), help="comma separated, e.g. RandomWaypoint,Manhattan")
    p.add_argument("--node-counts", type=_csv_list(int))
    p.add_argument("--v-max-values", type=_csv_list(float))
    p.add_argument("--receiver-counts", type=_csv_list(int))
    p.add_argument("--runs-per-cell", type=int)
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--range", type=float, help="transmission range (m)")
    p.add_argument("--snapshot-interval", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--block-length", type=float)
    p.add_argument("--base-seed", type=int)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return ExperimentConfig(**values)


def cmd_generate_traces(args) -> int:
    config = build_config(args)
    paths = write_traces(config, args.out / "traces")
    print(f"wrote {len(paths)} trace files to {args.out / 'traces'}")
    return 0


def cmd_run(args) -> int:
    config = build_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    result = run_matrix(config, jobs=args.jobs, paired_diagnostic=args.paired_diagnostic)
    csv_path = write_results(result.cells, args.out / "results.csv")
    audit_path = write_audit(result, args.out / "audit.json")
    print(f"wrote {csv_path} ({len(result.cells)} cells) and {audit_path}")
    a = result.audit
    print(f"steiner audit: {a.calls} trees, {a.altered} altered by spanning-tree/pruning passes")
    if result.dominance is not None:
        d = result.dominance
        print(f"paired diagnostic: {d.compared} snapshots compared, "
              f"{d.edge_violations} edge and {d.hop_violations} hop dominance violations")
        if d.violations:
            return 1
    return 0


def cmd_report(args) -> int:
    results_path = args.results or args.out / "results.csv"
    cells = read_results(results_path)
    charts = emit_charts(cells, args.out / "charts")
    header = f"{'model':<15}{'nodes':>6}{'v_max':>7}{'recv':>6} {'algorithm':<9}" + "".join(
        f"{m:>19}" for m in METRICS)
    print(header)
    for cell in cells:
        k = cell.key
        row = f"{k.model:<15}{k.nodes:>6}{k.v_max:>7g}{k.receivers:>6} {k.algorithm:<9}"
        for m in METRICS:
            mean = cell.mean(m)
            row += f"{'-' if mean is None else f'{mean:.3f}':>19}"
        print(row)
    print(f"wrote {len(charts)} charts to {args.out / 'charts'}")
    return 0


def cmd_verify(args) -> int:
    from .verification import run_all

    reports = run_all(seed=args.seed)
    for report in reports:
        print(report.summary())
        for failure in report.failures[:3]:
            print(f"    {failure}")
    return 0 if all(r.ok for r in reports) else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manetcast", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-traces", help="write mobility trace files for the matrix")
    _add_matrix_options(p)
    p.set_defaults(func=cmd_generate_traces)

    p = sub.add_parser("run", help="run the experiment matrix and write results.csv")
    _add_matrix_options(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--paired-diagnostic", action="store_true",
                   help="also build both trees on every snapshot and check dominance")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize results.csv and draw charts")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--results", type=Path, help="results CSV (default: OUT/results.csv)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="run the oracle property suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
