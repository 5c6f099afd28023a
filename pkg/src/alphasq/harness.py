"""End-to-end experiments: norm-equivalence runs, the Carleson audit, the
open-question probe, and deterministic CSV/JSON reporting.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .alpha import LIGHT, AlphaOptions, cube_alphas
from .analysis import square_function_J, continuous_square_function
from .cubes import build_system
from .errors import AlphaSqError, PreconditionError
from .generators import gen_function, generate
from .lpaley import lp_square_function
from .measures import DiscreteMeasure, WeightedFunction

SCHEMA_VERSION = 1


def lp_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """(sum |v|^p w)^{1/p}, cross-checked against compensated summation."""
    terms = np.abs(values) ** p * weights
    fast = float(terms.sum())
    slow = math.fsum(terms.tolist())
    if abs(fast - slow) > 1e-12 * max(abs(slow), 1e-300):
        fast = slow
    return fast ** (1.0 / p)


@dataclass
class ExperimentConfig:
    generator: dict  # {"kind", "params", "h", "seed"}
    functions: dict  # {"kind", "params", "count", "seed"}
    p_list: list = field(default_factory=lambda: [2.0])
    scale_range: tuple | None = None
    alpha_profile: str = "light"  # "light" | "full"
    alpha_overrides: dict = field(default_factory=dict)
    delta: float = 0.5
    refine: bool = False  # also run at 2h and report per-f ratio deltas
    include_continuous: bool = False
    continuous_points: int = 3
    include_lpaley: bool = True
    outdir: str | None = None
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for p in self.p_list:
            if not 1.0 < p < math.inf:
                raise PreconditionError("p must lie in (1, infinity)")
        if "seed" not in self.generator or "seed" not in self.functions:
            raise PreconditionError("generator and function seeds are "
                                    "mandatory")
        if self.scale_range is not None:
            self.scale_range = tuple(self.scale_range)

    def alpha_options(self) -> AlphaOptions:
        base = LIGHT if self.alpha_profile == "light" else AlphaOptions()
        opts = AlphaOptions(**{**base.__dict__, **self.alpha_overrides})
        return opts

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        raw.pop("schema_version", None)
        return cls(**raw)

    def to_json(self) -> dict:
        out = asdict(self)
        if out["scale_range"] is not None:
            out["scale_range"] = list(out["scale_range"])
        return out


@dataclass
class EquivalenceReport:
    config: dict
    cells: list
    summary: dict
    version: str = __version__

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "summary": self.summary,
            "cells": self.cells,
        }


def _build_context(config: ExperimentConfig, h: float):
    gen = config.generator
    sigma = generate(gen["kind"], gen.get("params"), h, gen["seed"])
    system = build_system(sigma, delta=config.delta, seed=config.seed)
    opts = config.alpha_options()
    ids = system.ids_in_range(config.scale_range)
    alphas_sigma, skipped = cube_alphas(sigma, system, ids, opts=opts)
    return sigma, system, opts, ids, alphas_sigma, skipped


def _function_suite(config: ExperimentConfig, sigma, system):
    spec = config.functions
    count = int(spec.get("count", 1))
    out = []
    for j in range(count):
        seed = spec["seed"] + j
        f = gen_function(spec["kind"], sigma, spec.get("params"),
                        seed=seed, system=system)
        out.append((seed, f))
    return out


def _cell(config, h, f_seed, p, sigma, f, profile, lp_res, cont_val):
    w = sigma.weights
    nf = lp_norm(f.values, w, p)
    nj = lp_norm(profile.values, w, p)
    cell = {
        "generator": config.generator["kind"],
        "generator_seed": config.generator["seed"],
        "h": h,
        "f_kind": config.functions["kind"],
        "f_seed": f_seed,
        "p": p,
        "norm_f": nf,
        "norm_J": nj,
        "ratio_J": nj / nf if nf > 1e-12 else None,
        "skipped_cubes": len(profile.skipped),
        "scale_range": list(config.scale_range) if config.scale_range else None,
        "solver_seed": config.seed,
        "version": __version__,
        "status": "ok" if nf > 1e-12 else "degenerate-f",
    }
    if lp_res is not None:
        nl = lp_norm(lp_res.values, w, p)
        cell["norm_lp"] = nl
        cell["ratio_lp"] = nl / nf if nf > 1e-12 else None
    if cont_val is not None:
        cell["cont_mean_sq"] = cont_val
    return cell


def run_equivalence(config: ExperimentConfig) -> EquivalenceReport:
    h = float(config.generator["h"])
    grids = [h] + ([2 * h] if config.refine else [])
    cells = []
    profiles_out = {}
    for hh in grids:
        sigma, system, opts, ids, alphas_sigma, skipped = _build_context(
            config, hh
        )
        suite = _function_suite(config, sigma, system)
        for f_seed, f in suite:
            try:
                alphas_f, _ = cube_alphas(sigma, system, ids, f=f, opts=opts)
                profile = square_function_J(
                    f, sigma, system, scale_range=config.scale_range,
                    opts=opts, alphas_sigma=alphas_sigma, alphas_f=alphas_f,
                )
            except AlphaSqError as exc:
                cells.append({
                    "h": hh, "f_seed": f_seed, "status": f"failed: {exc}",
                })
                continue
            lp_res = (
                lp_square_function(f, sigma) if config.include_lpaley else None
            )
            cont_val = None
            if config.include_continuous:
                rng = np.random.default_rng(config.seed + f_seed)
                idxs = rng.choice(sigma.size,
                                  size=min(config.continuous_points,
                                           sigma.size), replace=False)
                r_grid = np.geomspace(sigma.resolution(),
                                      sigma.diameter / 4, 9)
                vals = [
                    continuous_square_function(
                        f, sigma, sigma.points[i], r_grid, opts
                    )
                    for i in np.sort(idxs)
                ]
                cont_val = float(np.mean(vals))
            for p in config.p_list:
                cells.append(
                    _cell(config, hh, f_seed, p, sigma, f, profile,
                          lp_res, cont_val)
                )
            profiles_out[(hh, f_seed)] = profile
    summary = _summarize(cells, config)
    report = EquivalenceReport(config.to_json(), cells, summary)
    if config.outdir:
        write_outputs(config.outdir, report, profiles_out)
    return report


def _summarize(cells, config):
    summary = {"per_p": {}, "refinement": {}}
    ok = [c for c in cells if c.get("status") == "ok" and c.get("ratio_J")]
    for p in config.p_list:
        ratios = [c["ratio_J"] for c in ok if c["p"] == p]
        if ratios:
            lo, hi = min(ratios), max(ratios)
            summary["per_p"][str(p)] = {
                "min_ratio": lo,
                "max_ratio": hi,
                "C": max(hi, 1.0 / lo),
                "count": len(ratios),
            }
    if config.refine:
        h = float(config.generator["h"])
        for p in config.p_list:
            deltas = []
            fine = {c["f_seed"]: c["ratio_J"] for c in ok
                    if c["p"] == p and c["h"] == h}
            coarse = {c["f_seed"]: c["ratio_J"] for c in ok
                      if c["p"] == p and c["h"] == 2 * h}
            for s in sorted(set(fine) & set(coarse)):
                deltas.append(abs(fine[s] - coarse[s]) / fine[s])
            if deltas:
                summary["refinement"][str(p)] = {
                    "max_rel_change": max(deltas),
                    "mean_rel_change": float(np.mean(deltas)),
                }
    return summary


# ---------------------------------------------------------------------------
# Open-question probe


def probe_open_question(config: ExperimentConfig) -> EquivalenceReport:
    """Compare the two halves of the square function separately:
    (sum alpha_{f sigma}^2)^{1/2} vs (sum |f|^2 alpha_sigma^2)^{1/2}."""
    h = float(config.generator["h"])
    grids = [h] + ([2 * h] if config.refine else [])
    cells = []
    for hh in grids:
        sigma, system, opts, ids, alphas_sigma, _ = _build_context(config, hh)
        suite = _function_suite(config, sigma, system)
        for f_seed, f in suite:
            alphas_f, _ = cube_alphas(sigma, system, ids, f=f, opts=opts)
            profile = square_function_J(
                f, sigma, system, scale_range=config.scale_range, opts=opts,
                alphas_sigma=alphas_sigma, alphas_f=alphas_f,
            )
            part1 = np.zeros(sigma.size)
            part2 = np.zeros(sigma.size)
            for i, rows in profile.contributions.items():
                part1[i] = math.sqrt(math.fsum(a for (_, a, _) in rows))
                part2[i] = math.sqrt(math.fsum(b for (_, _, b) in rows))
            for p in config.p_list:
                w = sigma.weights
                n1 = lp_norm(part1, w, p)
                n2 = lp_norm(part2, w, p)
                cells.append({
                    "h": hh, "f_seed": f_seed, "p": p,
                    "norm_alpha_f_part": n1,
                    "norm_weighted_alpha_sigma_part": n2,
                    "ratio": n1 / n2 if n2 > 1e-10 else None,
                    "status": "ok" if n2 > 1e-10 else "degenerate-flat",
                    "version": __version__,
                })
    summary = {"ratios": [c["ratio"] for c in cells if c["ratio"]]}
    report = EquivalenceReport(config.to_json(), cells, summary)
    if config.outdir:
        write_outputs(config.outdir, report, {})
    return report


# ---------------------------------------------------------------------------
# Deterministic outputs


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def write_outputs(outdir, report: EquivalenceReport, profiles):
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "profiles"), exist_ok=True)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    columns = sorted({k for c in report.cells for k in c})
    write_csv(os.path.join(outdir, "cells.csv"), report.cells, columns)
    for (hh, f_seed), profile in sorted(profiles.items()):
        rows = [
            {"point": i, "cube": cid, "alpha_f_sq": a,
             "weighted_alpha_sigma_sq": b}
            for i, cid, a, b in profile.export_rows()
        ]
        write_csv(
            os.path.join(outdir, "profiles",
                         f"profile_h{hh:.10g}_f{f_seed}.csv"),
            rows,
            ["point", "cube", "alpha_f_sq", "weighted_alpha_sigma_sq"],
        )
