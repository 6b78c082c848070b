"""Command-line entry point: ``atscal {generate,fit,evaluate,benchmark,analyze}``.

Exit status is 0 on success, 1 for usage errors and 2 for data or fitting
errors. Every subcommand only wires files to library calls.
"""

import argparse
import os
import sys
from pathlib import Path

from . import kvfile
from .calibrators import METHODS, FitConfig, apply, fit, identity, load_params, save_params
from .dataset import TaskSplit, load_logits
from .errors import CalibrationError
from .harness import BenchmarkConfig, analyze_entropy_bins, analyze_per_class, format_table
from .harness import run_benchmark, write_report
from .metrics import DEFAULT_ECE_BINS, EceBinning, evaluate
from .synthgen import SynthConfig, generate, write_task

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
SEED_ENV = "CALIB_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; usage errors here are status 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {SEED_ENV} must be an integer, got {raw!r}") from None


def _seed(args):
    return args.seed if args.seed is not None else _env_seed()


def cmd_generate(args):
    items = kvfile.read(args.config)
    if _seed(args) is not None:
        items = {**items, "seed": str(_seed(args))}
    cfg = SynthConfig.from_items(items, source=args.config)
    split, oracle = generate(cfg, Path(args.out).name or "synth")
    out = write_task(split, oracle, args.out)
    print(f"wrote {out / 'val.csv'} {out / 'test.csv'} {out / 'oracle.kv'}")


def _fit_config(args):
    items = kvfile.read(args.config) if args.config else {}
    overrides = {}
    if args.objective is not None:
        overrides["objective"] = args.objective
    if _seed(args) is not None:
        overrides["seed"] = _seed(args)
    return FitConfig.from_items(items, **overrides)


def cmd_fit(args):
    cfg = _fit_config(args)
    val = load_logits(args.val, args.from_probs)
    p = fit(args.method, val, cfg)
    if p.method == "ptse":
        cfg = cfg.with_(objective="lece")
    save_params(p, args.out, cfg)
    print(f"method={p.method}")
    print(f"params={args.out}")


def cmd_evaluate(args):
    test = load_logits(args.test, args.from_probs)
    p = load_params(args.params) if args.params else identity("ts", test.k)
    report = evaluate(apply(p, test), EceBinning(args.ece_bins), method=p.method if args.params else "identity")
    items = {
        "method": report.method,
        "n": test.n,
        "k": test.k,
        "ece_bins": args.ece_bins,
        "accuracy": report.accuracy,
        "ece": report.ece,
        "ece_pct": 100.0 * report.ece,
        "nll": report.nll,
        "brier": report.brier,
    }
    sys.stdout.write(kvfile.dumps(items))


def cmd_benchmark(args):
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if _seed(args) is not None:
        overrides["seed0"] = _seed(args)
    cfg = BenchmarkConfig.read(args.config, **overrides)
    report = run_benchmark(cfg)
    paths = write_report(report, args.out)
    failed = sum(1 for c in report.cells if not c.ok)
    print(f"cells={len(report.cells)}")
    print(f"failed_cells={failed}")
    for key in ("cells", "summary", "meta"):
        print(f"{key}_file={paths[key]}")


def cmd_analyze(args):
    test = load_logits(args.test, args.from_probs)
    p = load_params(args.params)
    # the analysis tables only read the test split
    split = TaskSplit(test, test)
    if args.mode == "per-class":
        rows = analyze_per_class(split, p)
    else:
        rows = analyze_entropy_bins(split, p, args.bins)
    sys.stdout.write(format_table(rows, args.mode))


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser():
    parser = _Parser(prog="atscal", description="Post-hoc temperature scaling calibration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic miscalibrated task")
    g.add_argument("--config", required=True, help="key=value synthetic task config")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, help=f"overrides the config seed (default: ${SEED_ENV})")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a calibrator on validation logits")
    f.add_argument("--method", required=True, choices=METHODS)
    f.add_argument("--val", required=True, help="validation logit file")
    f.add_argument("--out", required=True, help="output parameter file")
    f.add_argument("--objective", choices=("nll", "lece"))
    f.add_argument("--seed", type=int, help=f"fit seed (default: ${SEED_ENV} or 0)")
    f.add_argument("--config", help="key=value file with fit.* hyperparameters")
    f.add_argument("--from-probs", action="store_true", help="input rows hold probabilities")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="print metrics of calibrated test logits")
    e.add_argument("--params", help="fitted parameter file (omit for the uncalibrated logits)")
    e.add_argument("--test", required=True, help="test logit file")
    e.add_argument("--ece-bins", type=_positive_int, default=DEFAULT_ECE_BINS)
    e.add_argument("--from-probs", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="run a benchmark grid")
    b.add_argument("--config", required=True, help="key=value benchmark config")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--workers", type=_positive_int, help="worker process cap")
    b.add_argument("--seed", type=int, help=f"overrides seed0 (default: ${SEED_ENV})")
    b.set_defaults(func=cmd_benchmark)

    a = sub.add_parser("analyze", help="per-class or per-entropy-bin temperature tables")
    a.add_argument("--mode", required=True, choices=("per-class", "entropy-bins"))
    a.add_argument("--params", required=True)
    a.add_argument("--test", required=True)
    a.add_argument("--bins", type=_positive_int, default=10, help="entropy bins (>= 2)")
    a.add_argument("--from-probs", action="store_true")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
