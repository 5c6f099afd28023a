"""Command line interface.

Subcommands: generate, cubes, alpha, squarefn, lpaley, verify,
equivalence, open-question, report.  Exit codes: 0 success, 2 per-cell
failures (with report emitted), 1 fatal error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import AlphaSqError

USAGE_EXIT = 64


def _parse_ball(text: str):
    from .measures import Ball

    parts = [float(x) for x in text.split(",")]
    if len(parts) < 3:
        raise AlphaSqError("ball needs center coordinates plus radius")
    return Ball(np.asarray(parts[:-1]), parts[-1])


def _cmd_generate(args):
    from .generators import generate
    from .measures import save_point_cloud

    params = json.loads(args.params) if args.params else {}
    sigma = generate(args.kind, params, args.h, args.seed)
    save_point_cloud(args.out, sigma)
    print(f"wrote {sigma.size} points to {args.out}")
    return 0


def _cmd_cubes(args):
    from .cubes import build_system
    from .measures import load_point_cloud

    sigma, _ = load_point_cloud(args.input)
    system = build_system(sigma, delta=args.delta, seed=args.seed)
    stats = system.containment_stats()
    out = {
        "n_points": sigma.size,
        "n_cubes": len(system.cubes),
        "depth": system.depth,
        "delta": system.delta,
        "containment": {
            "inner_violations": stats.inner_violations,
            "outer_violations": stats.outer_violations,
            "max_outer_ratio": stats.max_outer_ratio,
        },
    }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_alpha(args):
    from .alpha import AlphaOptions, alpha_f, alpha_number
    from .measures import load_point_cloud

    sigma, f = load_point_cloud(args.input)
    ball = _parse_ball(args.ball)
    opts = AlphaOptions(restarts=args.restarts, seed=args.seed)
    if args.use_f:
        if f is None:
            raise AlphaSqError("input file carries no f column")
        res = alpha_f(f, sigma, ball, opts)
    else:
        res = alpha_number(sigma, ball, opts)
    print(json.dumps(res.to_json(), indent=2, sort_keys=True))
    return 0


def _cmd_squarefn(args):
    from .alpha import LIGHT
    from .analysis import square_function_J
    from .cubes import build_system
    from .harness import write_csv
    from .measures import WeightedFunction, load_point_cloud

    sigma, f = load_point_cloud(args.input)
    if f is None:
        f = WeightedFunction(np.ones(sigma.size))
    system = build_system(sigma, delta=args.delta, seed=args.seed)
    rng = (
        tuple(int(x) for x in args.scale_range.split(","))
        if args.scale_range
        else None
    )
    profile = square_function_J(f, sigma, system, scale_range=rng, opts=LIGHT)
    rows = [
        {"point": i, "cube": cid, "alpha_f_sq": a,
         "weighted_alpha_sigma_sq": b}
        for i, cid, a, b in profile.export_rows()
    ]
    write_csv(args.out, rows,
              ["point", "cube", "alpha_f_sq", "weighted_alpha_sigma_sq"])
    print(f"wrote {len(rows)} contribution rows to {args.out}; "
          f"{len(profile.skipped)} cubes skipped")
    return 0


def _cmd_lpaley(args):
    from .harness import write_csv
    from .lpaley import lp_square_function
    from .measures import WeightedFunction, load_point_cloud

    sigma, f = load_point_cloud(args.input)
    if f is None:
        f = WeightedFunction(np.ones(sigma.size))
    ks = [int(x) for x in args.ks.split(",")] if args.ks else None
    res = lp_square_function(f, sigma, ks=ks)
    rows = [{"point": i, "value": float(v)} for i, v in enumerate(res.values)]
    write_csv(args.out, rows, ["point", "value"])
    print(f"scales used: {res.ks}; skipped: {res.skipped}; "
          f"wrote {args.out}")
    return 0


def _cmd_verify(args):
    """Invariant battery over an input cloud; exit 2 on any failure."""
    from .analysis import martingale_expand, parseval_defect
    from .cubes import build_system
    from .lpaley import DTilde, radius_grid
    from .measures import WeightedFunction, load_point_cloud

    sigma, _ = load_point_cloud(args.input)
    failures = []
    system = build_system(sigma, delta=args.delta, seed=args.seed)
    stats = system.containment_stats()
    frac_bad = (stats.inner_violations + stats.outer_violations) / max(
        stats.n_cubes, 1
    )
    if frac_bad > 0.01:
        failures.append(f"containment violations {frac_bad:.2%} > 1%")
    rng = np.random.default_rng(args.seed)
    f = WeightedFunction(rng.normal(size=sigma.size))
    defect = parseval_defect(f, system)
    if defect > 1e-10:
        failures.append(f"parseval defect {defect:.2e} > 1e-10")
    exp = martingale_expand(f, system)
    leaf = int(np.argmax(np.abs(f.values)))
    rec = exp.reconstruct(leaf, 0)
    if abs(rec - f.values[leaf]) > 1e-10 * max(1.0, abs(f.values[leaf])):
        failures.append("martingale reconstruction mismatch")
    ks, radii = radius_grid(sigma)
    if radii:
        dt = DTilde(sigma, radii[len(radii) // 2])
        d1 = float(np.abs(dt.apply(np.ones(sigma.size))).max())
        if d1 > 1e-12:
            failures.append(f"Dtilde(1) = {d1:.2e} > 1e-12")
    report = {
        "input": args.input,
        "n_points": sigma.size,
        "failures": failures,
        "ok": not failures,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if not failures else 2


def _cmd_equivalence(args):
    from .harness import ExperimentConfig, run_equivalence

    config = ExperimentConfig.from_json(args.config)
    if args.outdir:
        config.outdir = args.outdir
    report = run_equivalence(config)
    bad = [c for c in report.cells if str(c.get("status", "")).startswith(
        "failed")]
    print(json.dumps(report.summary, indent=2, sort_keys=True))
    return 2 if bad else 0


def _cmd_open_question(args):
    from .harness import ExperimentConfig, probe_open_question

    config = ExperimentConfig.from_json(args.config)
    if args.outdir:
        config.outdir = args.outdir
    report = probe_open_question(config)
    print(json.dumps(report.summary, indent=2, sort_keys=True))
    return 0


def _cmd_report(args):
    import os

    path = os.path.join(args.outdir, "report.json")
    with open(path) as fh:
        data = json.load(fh)
    print(json.dumps({"version": data.get("version"),
                      "summary": data.get("summary"),
                      "n_cells": len(data.get("cells", []))},
                     indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphasq",
        description="alpha-number square functions on point clouds",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("generate", help="write a synthetic point cloud")
    p.add_argument("--kind", required=True)
    p.add_argument("--h", type=float, default=2 ** -8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="JSON parameter object")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("cubes", help="build a cube system and report stats")
    p.add_argument("--input", required=True)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cubes)

    p = sub.add_parser("alpha", help="alpha-number of a cloud on a ball")
    p.add_argument("--input", required=True)
    p.add_argument("--ball", required=True,
                   help="comma list: center coords then radius")
    p.add_argument("--use-f", action="store_true",
                   help="weight by the f column (signed measure)")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_alpha)

    p = sub.add_parser("squarefn", help="dyadic square-function profile")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale-range", default=None, help="kmin,kmax")
    p.set_defaults(func=_cmd_squarefn)

    p = sub.add_parser("lpaley", help="smoothing-difference square function")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ks", default=None, help="comma list of dyadic scales")
    p.set_defaults(func=_cmd_lpaley)

    p = sub.add_parser("verify", help="run the invariant battery")
    p.add_argument("--input", required=True)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("equivalence", help="norm-equivalence experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_equivalence)

    p = sub.add_parser("open-question",
                       help="compare the two square-function halves")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", default=None)
    p.set_defaults(func=_cmd_open_question)

    p = sub.add_parser("report", help="summarize an experiment directory")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            return USAGE_EXIT
        return 0
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args)
    except AlphaSqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
