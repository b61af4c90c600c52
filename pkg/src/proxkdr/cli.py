"""Command-line entry point: ``proxkdr {simulate,truth,fit,estimate,bench}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import BenchConfig, cached_truth, fit_policy, run_bench
from .bridges import default_hyper, fit_h, fit_q
from .errors import ProxKdrError
from .estimators import METHODS, bandwidth_rule, estimate_curve, make_grid
from .scenarios import generate, parse_scenario


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--grid expects min:max:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects min:max:count, got {text!r}") from None
    make_grid(lo, hi, count)
    return lo, hi, count


def _s_value(text: str):
    if text == "cv":
        return "cv"
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("--s must be positive or 'cv'")
    return value


def cmd_simulate(args):
    spec = parse_scenario(args.scenario, n=args.n, seed=args.seed)
    io.save_csv(generate(spec).observed, args.out, args.precision)


def cmd_truth(args):
    spec = parse_scenario(args.scenario, seed=args.seed)
    grid = make_grid(*args.grid)
    truth = cached_truth(spec, grid, args.reps, args.cache_dir)
    io.save_curve_csv(args.out, grid, {"truth": truth}, args.precision)


def cmd_fit(args):
    data = io.load_csv(args.data)
    hyper = "cv" if args.s == "cv" else default_hyper(data.n, args.s)
    h = fit_h(data, hyper, seed=args.seed)
    policy = fit_policy(args.policy, data, None, seed=args.seed)
    q = fit_q(data, policy, hyper, clip_floor=args.clip_floor, seed=args.seed)
    io.save_models(args.out, data, h, q, policy)


def cmd_estimate(args):
    data = io.load_csv(args.data)
    models = io.load_models(args.models)
    io.check_schema(models, data)
    smooth = None if args.method == "por" else bandwidth_rule(args.c, data)
    curve = estimate_curve(args.method, models, data, args.grid, smooth)
    io.save_curve_csv(args.out, curve.grid, {args.method: curve.estimates}, args.precision)


def cmd_bench(args):
    doc = io.load_config(args.config)
    precision = int(doc.pop("precision", args.precision))
    doc.pop("out", None)
    config = BenchConfig.from_dict(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_bench(config)
    table.to_csv(out / "cmse.csv", precision)
    table.to_json(out / "cmse.json", precision)
    table.write_curves(out / "curves.csv", precision)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxkdr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--precision", type=int, default=io.DEFAULT_PRECISION)
        return p

    p = common(sub.add_parser("simulate", help="draw a synthetic dataset"))
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("truth", help="Monte Carlo dose-response curve"))
    p.add_argument("--scenario", required=True)
    p.add_argument("--grid", type=parse_grid, required=True)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_truth)

    p = common(sub.add_parser("fit", help="fit the policy and both bridges"))
    p.add_argument("--data", required=True)
    p.add_argument("--policy", choices=("kde", "parametric"), default="kde")
    p.add_argument("--s", type=_s_value, default=1.0)
    p.add_argument("--clip-floor", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("estimate", help="dose-response curve from fitted models"))
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--c", type=float, default=1.5)
    p.add_argument("--grid", type=parse_grid, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("bench", help="replicated simulation study"))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    try:
        args.func(args)
    except (ProxKdrError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
