#!/usr/bin/env python3
"""Open-question probe: compare the two halves of the square function
(the alpha_{f sigma} part vs the |f|-weighted alpha_sigma part) in L^p on
a non-flat carrier.  Reports ratios only -- no assertion is made.
"""

import argparse
import json

from alphasq.harness import ExperimentConfig, probe_open_question


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="lipschitz_graph")
    ap.add_argument("--params", default='{"slope": 0.3}')
    ap.add_argument("--h", type=float, default=2 ** -9)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--p", type=float, nargs="+", default=[2.0])
    ap.add_argument("--kmax", type=int, default=6)
    ap.add_argument("--refine", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="results/open_question")
    args = ap.parse_args()

    config = ExperimentConfig(
        generator={"kind": args.kind, "params": json.loads(args.params),
                   "h": args.h, "seed": args.seed},
        functions={"kind": "random_multiscale",
                   "params": {"per_level": 2, "max_level": args.kmax - 1},
                   "count": args.count, "seed": 500},
        p_list=list(args.p),
        scale_range=(0, args.kmax),
        alpha_profile="light",
        refine=args.refine,
        include_lpaley=False,
        outdir=args.outdir,
        seed=args.seed,
    )
    report = probe_open_question(config)
    ratios = report.summary["ratios"]
    print(json.dumps({
        "n_cells": len(report.cells),
        "ratio_min": min(ratios) if ratios else None,
        "ratio_max": max(ratios) if ratios else None,
    }, indent=2, sort_keys=True))
    print(f"artifacts in {args.outdir}")


if __name__ == "__main__":
    main()
