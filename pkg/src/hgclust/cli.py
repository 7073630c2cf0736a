"""Command-line interface.

Subcommands: synth, train, eval, report, gradcheck, aggregate.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys

from .errors import DataError, NumericsError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we use 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hgclust",
                     description="Task-guided co-clustering of coded visit "
                                 "records on a hypergraph, with risk prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON generator spec")
    p.add_argument("--out", required=True, help="output data directory")

    p = sub.add_parser("train", help="train on a data directory")
    p.add_argument("--data", required=True, help="data directory (visits.jsonl ...)")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--quiet", action="store_true", help="suppress epoch lines")

    p = sub.add_parser("eval", help="evaluate a trained run")
    p.add_argument("--rundir", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("report", help="export the cluster case-study report")
    p.add_argument("--rundir", required=True)
    p.add_argument("--top-concepts", type=int, default=15)
    p.add_argument("--top-visits", type=int, default=3)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--module", default="all",
                   choices=("all", "transformer", "cluster", "align"))

    p = sub.add_parser("aggregate", help="mean +/- std over completed runs")
    p.add_argument("--runs", required=True, help="glob of run directories")
    return parser


def _cmd_synth(args) -> int:
    from .synthetic import generate_synthetic, load_spec
    spec = load_spec(args.spec)
    summary = generate_synthetic(spec, args.out)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    from .config import load_config
    from .pipeline import run_training
    settings = load_config(args.config)
    if args.seed is not None:
        settings.train.seed = args.seed

    def log_fn(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:4d}  cls {row['loss_cls']:.5f}  "
                  f"kl_v {row['loss_kl_nodes']:.5f}  kl_e {row['loss_kl_edges']:.5f}  "
                  f"align {row['loss_align']:.5f}  val_auroc {row['val_auroc']:.4f}")

    summary = run_training(args.data, settings, args.out, log_fn=log_fn)
    print(f"best epoch {summary['best_epoch']} "
          f"val_auroc {summary['best_val_auroc']:.4f}")
    print(summary["test_report"].to_json())
    return 0


def _cmd_eval(args) -> int:
    from .pipeline import evaluate_run
    report = evaluate_run(args.rundir, args.split)
    print(report.to_json())
    return 0


def _cmd_report(args) -> int:
    from .pipeline import report_run
    report = report_run(args.rundir, args.top_concepts, args.top_visits)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    from .diagnostics import run_gradcheck
    reports = run_gradcheck(args.module)
    failed = False
    for name, report in reports.items():
        print(f"{name}: {report.summary()}")
        failed |= not report.passed
    if failed:
        raise NumericsError("gradient check failed")
    return 0


def _cmd_aggregate(args) -> int:
    from .pipeline import aggregate_runs
    dirs = sorted(glob.glob(args.runs))
    if not dirs:
        raise DataError(f"no run directories match {args.runs!r}")
    agg = aggregate_runs(dirs)
    print(f"aggregated over {agg['n_runs']} runs:")
    for key, stats in agg.items():
        if key == "n_runs":
            continue
        print(f"  {key:24s} {stats['mean']:.4f} +/- {stats['std']:.4f} "
              f"(n={stats['n']})")
    return 0


_COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval,
             "report": _cmd_report, "gradcheck": _cmd_gradcheck,
             "aggregate": _cmd_aggregate}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
