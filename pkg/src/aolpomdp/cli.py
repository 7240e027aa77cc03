"""Command line entry point: `run`, `oracle-check`, and `plot-data`."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import ExperimentConfig, emit_plot_data, run_experiment, \
    run_oracle_suite


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aolpomdp",
        description="Adaptive open-loop POMDP planning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True, type=Path,
                     help="dotted-key experiment configuration file")
    run.add_argument("--seed-override", default=None,
                     help="comma-separated seed list replacing the config's")
    run.add_argument("--out-dir", default=Path("out"), type=Path)
    run.add_argument("--compat-paper-obsmodel", action="store_true",
                     help="use the literal distance-decreasing observation "
                          "error formula")

    oracle = sub.add_parser("oracle-check", help="run the exact-oracle "
                            "property suite on random tiny models")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--instances", type=int, default=50)
    oracle.add_argument("--inject-bug", action="store_true",
                        help="swap the bounds to verify the suite fails")

    plot = sub.add_parser("plot-data", help="derive plot-ready tables "
                          "from episode traces")
    plot.add_argument("traces", nargs="+", type=Path)
    plot.add_argument("--out-dir", default=Path("plot"), type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        seeds = None
        if args.seed_override:
            seeds = [int(s) for s in args.seed_override.split(",") if s.strip()]
        try:
            config = ExperimentConfig.from_document(
                args.config.read_text(),
                compat_obsmodel=args.compat_paper_obsmodel,
                seed_override=seeds)
            result = run_experiment(config, out_dir=args.out_dir)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        sys.stdout.write(result.summary_text())
        if result.treatment.errors or (
                result.baseline is not None and result.baseline.errors):
            return 1
        return 0
    if args.command == "oracle-check":
        report = run_oracle_suite(args.seed, args.instances,
                                  inject_bug=args.inject_bug)
        sys.stdout.write(report.text())
        return 0 if report.passed else 1
    if args.command == "plot-data":
        try:
            files = emit_plot_data(args.traces, args.out_dir)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for name, path in sorted(files.items()):
            print(f"{name} {path}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
