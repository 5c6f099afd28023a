"""Synthetic carrier measures (uniformly-rectifiable-by-construction) and
test functions on them.  Everything is deterministic given (params, seed).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError
from .measures import DiscreteMeasure, WeightedFunction


def generate(kind: str, params: dict | None = None, h: float = 2 ** -8,
             seed: int = 0) -> DiscreteMeasure:
    params = dict(params or {})
    if h <= 0:
        raise PreconditionError("h must be positive")
    makers = {
        "plane": _gen_plane,
        "segment": _gen_segment,
        "lipschitz_graph": _gen_lipschitz_graph,
        "bilipschitz_lattice": _gen_bilipschitz_lattice,
        "two_planes": _gen_two_planes,
    }
    if kind not in makers:
        raise PreconditionError(f"unknown generator kind: {kind!r}")
    return makers[kind](params, h, seed)


def _gen_segment(params, h, seed):
    length = float(params.get("length", 1.0))
    xs = (np.arange(int(round(length / h))) + 0.5) * h
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return DiscreteMeasure(pts, np.full(len(xs), h), d=1, label="segment")


def _gen_plane(params, h, seed):
    d = int(params.get("d", 1))
    n = int(params.get("n", 2))
    extent = float(params.get("extent", 1.0))
    angle = float(params.get("angle", 0.0))
    if not 1 <= d < n:
        raise PreconditionError("need 1 <= d < n")
    axes = [(np.arange(int(round(extent / h))) + 0.5) * h] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = np.zeros((len(grid), n))
    pts[:, :d] = grid
    if angle:
        c, s = math.cos(angle), math.sin(angle)
        rot = np.eye(n)
        rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, -s, s, c
        pts = pts @ rot.T
    return DiscreteMeasure(pts, np.full(len(pts), h ** d), d=d, label="plane")


def graph_profile(params, seed):
    """The random trigonometric profile A and its derivative, rescaled so
    that sup |A'| equals the requested slope."""
    slope = float(params.get("slope", 0.2))
    n_modes = int(params.get("n_modes", 6))
    decay = float(params.get("decay", 2.0))
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=n_modes) / np.arange(1, n_modes + 1) ** decay
    phases = rng.uniform(0, 2 * math.pi, size=n_modes)
    freqs = 2 * math.pi * np.arange(1, n_modes + 1)

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return sum(
            -amps[j] * freqs[j] * np.sin(freqs[j] * x + phases[j])
            for j in range(n_modes)
        )

    xs = np.linspace(0, 1, 4096)
    peak = float(np.abs(deriv(xs)).max())
    scale = slope / peak if peak > 0 else 0.0

    def profile(x):
        x = np.asarray(x, dtype=float)
        return scale * sum(
            amps[j] * np.cos(freqs[j] * x + phases[j]) for j in range(n_modes)
        )

    return profile, (lambda x: scale * deriv(x)), slope


def _gen_lipschitz_graph(params, h, seed):
    profile, dprofile, slope = graph_profile(params, seed)
    xs = (np.arange(int(round(1.0 / h))) + 0.5) * h
    ys = profile(xs)
    w = h * np.sqrt(1.0 + dprofile(xs) ** 2)  # arclength weights
    pts = np.stack([xs, ys], axis=1)
    return DiscreteMeasure(pts, w, d=1, label=f"lipschitz_graph[{slope}]")


def _gen_bilipschitz_lattice(params, h, seed):
    distortion = float(params.get("distortion", 0.2))
    if not 0 <= distortion < 0.5:
        raise PreconditionError("distortion must lie in [0, 0.5) for "
                                "bi-Lipschitz validity")
    d = int(params.get("d", 1))
    n = int(params.get("n", 2))
    base = _gen_plane({"d": d, "n": n}, h, seed)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * math.pi, size=n)
    pts = base.points.copy()
    for axis in range(n):
        pts[:, axis] += (
            distortion * h
            * np.sin(2 * math.pi * base.points[:, 0] / (8 * h) + phase[axis])
        )
    return DiscreteMeasure(pts, base.weights, d=d,
                           label=f"bilipschitz_lattice[{distortion}]")


def _gen_two_planes(params, h, seed):
    angle = float(params.get("angle", math.pi / 2))
    length = float(params.get("length", 1.0))
    ts = (np.arange(int(round(length / h))) + 0.5) * h
    ray1 = np.stack([ts, np.zeros_like(ts)], axis=1)
    ray2 = np.stack(
        [ts * math.cos(angle), ts * math.sin(angle)], axis=1
    )
    pts = np.vstack([ray1, ray2])
    w = np.full(len(pts), h)
    return DiscreteMeasure(pts, w, d=1, label=f"two_planes[{angle:.3f}]")


# ---------------------------------------------------------------------------
# Test functions


def gen_function(kind: str, carrier: DiscreteMeasure,
                 params: dict | None = None, seed: int = 0,
                 system=None) -> WeightedFunction:
    params = dict(params or {})
    if kind == "constant":
        c = float(params.get("c", 1.0))
        return WeightedFunction(np.full(carrier.size, c))
    if kind == "bump":
        center = np.asarray(params.get("center", carrier.points.mean(axis=0)),
                            dtype=float)
        width = float(params.get("width", 0.25))
        rho = np.linalg.norm(carrier.points - center, axis=1) / width
        vals = np.clip(1.0 - rho ** 2, 0.0, None) ** 2
        return WeightedFunction(vals)
    if kind == "haar":
        if system is None:
            raise PreconditionError("haar needs a cube system")
        cid = int(params.get("cube", 0))
        return WeightedFunction(haar_atom(carrier, system, cid,
                                          normalize=False))
    if kind == "random_multiscale":
        if system is None:
            raise PreconditionError("random_multiscale needs a cube system")
        return random_multiscale(carrier, system, params, seed)
    raise PreconditionError(f"unknown function kind: {kind!r}")


def haar_atom(sigma: DiscreteMeasure, system, cid: int,
              normalize: bool = True) -> np.ndarray:
    """Mean-zero step on cube `cid`: one value on the first child, another
    on the rest of the cube, zero elsewhere.  Normalized in L^2(sigma)
    unless told otherwise (then the first-child value is 1)."""
    cube = system.cube(cid)
    if not cube.children:
        raise PreconditionError("haar atom needs a subdivided cube")
    first = system.cube(cube.children[0]).members
    rest = np.setdiff1d(cube.members, first)
    if len(rest) == 0:
        raise PreconditionError("cube has a single child cell")
    w = sigma.weights
    m1, m2 = float(w[first].sum()), float(w[rest].sum())
    vals = np.zeros(sigma.size)
    vals[first] = 1.0
    vals[rest] = -m1 / m2
    if normalize:
        nrm = math.sqrt(float(np.dot(w, vals ** 2)))
        vals /= nrm
    return vals


def random_multiscale(sigma: DiscreteMeasure, system, params: dict,
                      seed: int) -> WeightedFunction:
    """Sum of L^2-normalized mean-zero atoms on randomly chosen cubes, one
    batch per level, with geometrically decaying coefficients.  Atoms on
    distinct cubes are mutually orthogonal, so the squared norm is the sum
    of squared coefficients."""
    decay = float(params.get("decay", 0.7))
    per_level = int(params.get("per_level", 2))
    kmax = int(params.get("max_level", min(system.depth - 1, 8)))
    rng = np.random.default_rng(seed)
    vals = np.zeros(sigma.size)
    energy = 0.0
    for k in range(0, kmax + 1):
        ids = [
            cid for cid in system.levels.get(k, [])
            if system.cube(cid).children
            and len(system.cube(cid).children) > 1
        ]
        if not ids:
            continue
        chosen = rng.choice(len(ids), size=min(per_level, len(ids)),
                            replace=False)
        for j in np.sort(chosen):
            coeff = decay ** k * rng.normal()
            vals += coeff * haar_atom(sigma, system, ids[int(j)])
            energy += coeff ** 2
    out = WeightedFunction(vals)
    object.__setattr__(out, "energy", energy)
    return out
