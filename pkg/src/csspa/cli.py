"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver divergence (including a
reference solve that misses its tolerance), 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import fair_classification as fc
from . import fair_spam as fs
from .harness import ExperimentConfig, compare_solvers, fit_rate, run_experiment
from .model import ConfigError
from .reference import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers separated by commas: {text!r}")


def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window must look like 1000,100000")
    return lo, hi


def _run_flags(p):
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--seed", type=_seeds, help="seed list, e.g. 0,1,2 (overrides config)")
    p.add_argument("--horizon", type=int, help="iteration count T")
    p.add_argument("--theta0", type=float, help="tightening theta = theta0 * T^(-1/4)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stride", type=int, help="trace every K iterations")


def build_parser():
    parser = argparse.ArgumentParser(prog="csspa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    _run_flags(sub.add_parser("solve", help="run one solver over the configured seeds"))
    _run_flags(sub.add_parser("compare", help="run the configured solver variants side by side"))

    p = sub.add_parser("rate-fit", help="fit a log-log slope to trace files")
    p.add_argument("traces", nargs="+", help="trace CSV files, one per seed")
    p.add_argument("--column", default="gap_running")
    p.add_argument("--window", type=_window, default=(1e3, 1e5), help="t_min,t_max")
    p.add_argument("--out", help="write the fit as JSON here")

    p = sub.add_parser("gen-spam-data", help="write a synthetic SpAM dataset as CSV")
    p.add_argument("--out", required=True, help="CSV path (metadata goes to <out>.meta.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-points", type=int, default=2000)
    p.add_argument("--d-features", type=int, default=30)
    p.add_argument("--noise-std", type=float, default=fs.SpamSyntheticSpec.noise_std)

    p = sub.add_parser("ingest-adult", help="one-hot encode an Adult-style CSV")
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--schema", required=True, help="JSON schema of column roles")
    p.add_argument("--out", required=True, help="processed dataset CSV")
    return parser


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config)
    return cfg.with_overrides(seeds=args.seed, horizon=args.horizon, theta0=args.theta0,
                              out_dir=args.out, trace_stride=args.stride)


def _solve(args):
    summary = run_experiment(_load_config(args))
    for e in summary["runs"]:
        if e["status"] == "ok":
            print(f"seed {e['seed']}: gap {e['final_gap']:.6g}  "
                  f"violation {e['final_violation']:.6g}  ({e['wall_time']:.2f}s)")
        else:
            print(f"seed {e['seed']}: {e['error']}", file=sys.stderr)
    return EXIT_DIVERGED if summary["diverged"] else EXIT_OK


def _compare(args):
    comparison = compare_solvers(_load_config(args))
    for row in comparison["solvers"]:
        print(f"{row['label']}: |gap| {row['mean_abs_final_gap']}  "
              f"violation {row['mean_final_violation']}  slope {row['gap_slope']}")
    return EXIT_DIVERGED if any(r["diverged"] for r in comparison["solvers"]) else EXIT_OK


def _rate_fit(args):
    fit = fit_rate(args.traces, args.column, args.window)
    text = json.dumps(asdict(fit), indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _gen_spam(args):
    spec = fs.SpamSyntheticSpec(n_points=args.n_points, d_features=args.d_features,
                                noise_std=args.noise_std, seed=args.seed)
    fs.save_spam_csv(fs.generate_spam_synthetic(spec), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _ingest(args):
    ds = fc.ingest_adult_csv(args.csv, args.schema)
    fc.save_classification_csv(ds, args.out)
    print(f"rows {ds.n_rows}  features {ds.n_features}  groups {ds.group_counts}  "
          f"skipped {ds.info['skipped_rows']}")
    return EXIT_OK


COMMANDS = {"solve": _solve, "compare": _compare, "rate-fit": _rate_fit,
            "gen-spam-data": _gen_spam, "ingest-adult": _ingest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"error: {exc} (residual {exc.residual:.3g})", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
