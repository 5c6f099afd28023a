"""Martingale differences on a cube tree, the dyadic square function built
from alpha-numbers, its continuous analogue, a Calderon-Zygmund
decomposition, a candidate-family maximal function, and the estimate
probes that tie them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alpha import AlphaOptions, alpha_f, alpha_number, cube_alphas
from .errors import EmptyBallError, PreconditionError, ResolutionError
from .measures import (
    Ball,
    DiscreteMeasure,
    WeightedFunction,
    abs_average,
    average,
)

# ---------------------------------------------------------------------------
# Martingale differences


@dataclass
class MartingaleExpansion:
    """Delta_Q f for every internal cube, stored sparsely on members."""

    system: object
    root_average: float
    coeffs: dict  # cube id -> values aligned with cube.members
    averages: dict  # cube id -> <f>_Q

    def delta(self, cid: int):
        return self.coeffs.get(cid)

    def norm_sq(self, cid: int) -> float:
        vals = self.coeffs.get(cid)
        if vals is None:
            return 0.0
        w = self.system.sigma.weights[self.system.cube(cid).members]
        return float(np.dot(w, vals ** 2))

    def total_energy(self) -> float:
        return math.fsum(self.norm_sq(cid) for cid in self.coeffs)

    def reconstruct(self, point_index: int, from_cube: int, f_values=None):
        """<f>_Q plus the sum of Delta_P f(x) over descendants P of Q
        containing x (eq. the martingale telescoping identity)."""
        sys = self.system
        total = self.averages[from_cube]
        chain = self._chain_below(point_index, from_cube)
        for cid in chain:
            vals = self.coeffs.get(cid)
            if vals is None:
                continue
            mem = sys.cube(cid).members
            pos = int(np.searchsorted(mem, point_index))
            total += float(vals[pos])
        return total

    def _chain_below(self, point_index: int, from_cube: int):
        sys = self.system
        start = sys.cube(from_cube).level
        out = []
        prev = from_cube
        for k in range(start, sys.depth + 1):
            cid = sys.cube_at(point_index, k)
            if k == start and cid != from_cube:
                raise PreconditionError("point not in the starting cube")
            if cid != prev or k == start:
                out.append(cid)
            prev = cid
        # the chain includes from_cube itself exactly once
        return out


def martingale_expand(f: WeightedFunction, system) -> MartingaleExpansion:
    f.check_carrier(system.sigma)
    averages = {}
    for cube in system.cubes:
        averages[cube.id] = system.average_on(cube.id, f.values)
    coeffs = {}
    for cube in system.cubes:
        if not cube.children:
            continue
        vals = np.empty(len(cube.members))
        base = averages[cube.id]
        mem = cube.members
        for ch in cube.children:
            child = system.cube(ch)
            pos = np.searchsorted(mem, child.members)
            vals[pos] = averages[ch] - base
        coeffs[cube.id] = vals
    return MartingaleExpansion(system, averages[0], coeffs, averages)


def parseval_defect(f: WeightedFunction, system, expansion=None) -> float:
    """Relative gap between sum of ||Delta_Q f||_2^2 and ||f - <f>||_2^2."""
    exp = expansion or martingale_expand(f, system)
    w = system.sigma.weights
    target = float(np.dot(w, (f.values - exp.root_average) ** 2))
    got = exp.total_energy()
    scale = max(target, 1e-300)
    return abs(got - target) / scale


# ---------------------------------------------------------------------------
# Square functions


@dataclass
class SquareProfile:
    values: np.ndarray  # Jf at each support point
    contributions: dict  # point index -> list of (cid, a_f^2, |f|^2 a_sigma^2)
    scale_range: tuple | None
    skipped: list

    def value_sq(self, i: int) -> float:
        return math.fsum(a + b for (_, a, b) in self.contributions.get(i, []))

    def export_rows(self):
        for i in sorted(self.contributions):
            for cid, a, b in self.contributions[i]:
                yield i, cid, a, b


def _cube_alpha_tables(f, sigma, system, ids, opts, alphas_sigma, alphas_f):
    if alphas_sigma is None:
        alphas_sigma, skip_s = cube_alphas(sigma, system, ids, opts=opts)
    else:
        skip_s = [c for c in ids if c not in alphas_sigma]
    if f is None:
        return alphas_sigma, None, sorted(set(skip_s))
    if alphas_f is None:
        alphas_f, skip_f = cube_alphas(sigma, system, ids, f=f, opts=opts)
    else:
        skip_f = [c for c in ids if c not in alphas_f]
    return alphas_sigma, alphas_f, sorted(set(skip_s) | set(skip_f))


def square_function_J(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    system,
    fam=None,
    scale_range=None,
    opts: AlphaOptions | None = None,
    alphas_sigma=None,
    alphas_f=None,
    restrict_points=None,
) -> SquareProfile:
    """Jf(x)^2 = sum over cubes containing x of
    alpha_{f sigma}(Q)^2 + |f|_{B_Q}^2 alpha_sigma(Q)^2."""
    f.check_carrier(sigma)
    ids = system.ids_in_range(scale_range)
    alphas_sigma, alphas_f, skipped = _cube_alpha_tables(
        f, sigma, system, ids, opts, alphas_sigma, alphas_f
    )
    fabs = {}
    for cid in ids:
        if cid in alphas_sigma and cid in alphas_f:
            try:
                fabs[cid] = abs_average(f, sigma, system.ball_of(cid))
            except EmptyBallError:
                fabs[cid] = 0.0
    contributions: dict = {}
    points = (
        range(sigma.size) if restrict_points is None else restrict_points
    )
    values = np.zeros(sigma.size)
    for i in points:
        rows = []
        seen = set()
        for k in range(system.depth + 1):
            cid = system.cube_at(i, k)
            if cid in seen or cid not in fabs:
                continue
            seen.add(cid)
            af2 = alphas_f[cid].value ** 2
            asig2 = fabs[cid] ** 2 * alphas_sigma[cid].value ** 2
            rows.append((cid, af2, asig2))
        contributions[i] = rows
        values[i] = math.sqrt(math.fsum(a + b for (_, a, b) in rows))
    return SquareProfile(values, contributions, scale_range, skipped)


def square_function_J0(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    system,
    q0: int,
    scale_range=None,
    opts: AlphaOptions | None = None,
    alphas_sigma=None,
    alphas_f=None,
) -> SquareProfile:
    """J restricted to the subtree of cube q0, on q0's members."""
    sub = _subtree_ids(system, q0)
    if scale_range is not None:
        kmin, kmax = scale_range
        sub = [c for c in sub if kmin <= system.cube(c).level <= kmax]
    if alphas_sigma is None:
        alphas_sigma, _ = cube_alphas(sigma, system, sub, opts=opts)
    if alphas_f is None:
        alphas_f, _ = cube_alphas(sigma, system, sub, f=f, opts=opts)
    profile = square_function_J(
        f,
        sigma,
        system,
        scale_range=None,
        opts=opts,
        alphas_sigma=alphas_sigma,
        alphas_f=alphas_f,
        restrict_points=list(system.cube(q0).members),
    )
    allowed = set(sub)
    for i, rows in profile.contributions.items():
        rows = [r for r in rows if r[0] in allowed]
        profile.contributions[i] = rows
        profile.values[i] = math.sqrt(
            math.fsum(a + b for (_, a, b) in rows)
        )
    return profile


def _subtree_ids(system, q0: int):
    out = []
    stack = [q0]
    while stack:
        cid = stack.pop()
        out.append(cid)
        stack.extend(system.cube(cid).children)
    return out


def split_J0(profile: SquareProfile, system, q0: int, s: int):
    """Split J0 over the subtree of q0 at an intermediate cube s into
    J1 (cubes inside s) and the constant J2 (cubes with s strictly below
    them, up to q0).  Returns (j1_sq per point dict, j2_sq float)."""
    inside = set(_subtree_ids(system, s))
    chain_above = set()
    cur = system.cube(s).parent
    while cur is not None:
        chain_above.add(cur)
        if cur == q0:
            break
        cur = system.cube(cur).parent
    s_members = set(int(i) for i in system.cube(s).members)
    j2_sq = None
    j1 = {}
    for i in profile.contributions:
        if i not in s_members:
            continue
        rows = profile.contributions[i]
        j1[i] = math.fsum(a + b for (cid, a, b) in rows if cid in inside)
        above = math.fsum(a + b for (cid, a, b) in rows if cid in chain_above)
        if j2_sq is None:
            j2_sq = above
    return j1, (j2_sq or 0.0)


def continuous_square_function(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    x,
    r_grid,
    opts: AlphaOptions | None = None,
    skipped_log: list | None = None,
) -> float:
    """Midpoint-in-log approximation of
    int (alpha_{f sigma}(x,r) + |f|_{x,r} alpha_sigma(x,r))^2 dr/r."""
    from .alpha import theta

    r_grid = np.sort(np.asarray(r_grid, dtype=float))
    total = 0.0
    for lo, hi in zip(r_grid[:-1], r_grid[1:]):
        r_mid = math.sqrt(lo * hi)
        try:
            t = theta(f, sigma, x, r_mid, opts)
        except (EmptyBallError, ResolutionError):
            if skipped_log is not None:
                skipped_log.append(r_mid)
            continue
        total += t.total ** 2 * math.log(hi / lo)
    return total


# ---------------------------------------------------------------------------
# Maximal function


def candidate_balls(sigma: DiscreteMeasure, system, point_index: int,
                    n_random: int = 16, seed: int = 0):
    """Balls around the point's cube chain (t in {1, 4}) plus a
    just-this-point ball and seeded random balls containing x."""
    x = sigma.points[point_index]
    balls = []
    seen = set()
    for k in range(system.depth + 1):
        cid = system.cube_at(point_index, k)
        if cid in seen:
            continue
        seen.add(cid)
        for t in (1.0, 4.0):
            balls.append(Ball(system.center_point(cid),
                              t * system.side(cid)))
    nn = sigma.tree().query(x, k=min(2, sigma.size))[0]
    nn_dist = float(nn[-1]) if sigma.size > 1 else 1.0
    balls.append(Ball(x, max(0.5 * nn_dist, 1e-12)))
    rng = np.random.default_rng(seed + point_index)
    for _ in range(n_random):
        radius = math.exp(
            rng.uniform(math.log(max(nn_dist, 1e-12)),
                        math.log(max(sigma.diameter, nn_dist * 2)))
        )
        offset = rng.normal(size=sigma.n)
        offset *= rng.uniform(0, 0.9) * radius / max(np.linalg.norm(offset), 1e-30)
        balls.append(Ball(x + offset, radius))
    return balls


def maximal_function(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    point_index: int,
    balls=None,
    system=None,
    seed: int = 0,
) -> float:
    """Candidate-family supremum of |f|_B over balls containing the point
    (a documented lower approximation of the non-centered maximal sup)."""
    if balls is None:
        if system is None:
            raise PreconditionError("need candidate balls or a cube system")
        balls = candidate_balls(sigma, system, point_index, seed=seed)
    best = 0.0
    x = sigma.points[point_index]
    for ball in balls:
        if np.linalg.norm(x - ball.center) >= ball.radius:
            continue
        try:
            best = max(best, abs_average(f, sigma, ball))
        except EmptyBallError:
            continue
    return best


# ---------------------------------------------------------------------------
# Calderon-Zygmund decomposition


@dataclass
class CZDecomposition:
    carrier: int  # cube id R
    level: float
    cubes: list  # selected maximal cube ids
    g: np.ndarray  # good part, full-length array (f outside R untouched)
    b: dict  # cube id -> values aligned with cube.members
    whole_cube: bool
    averages: dict  # id -> |f|_{B_Q} at selection time

    @property
    def c_g(self) -> float:
        return float(np.abs(self.g).max()) / self.level if self.level else 0.0


def cz_decompose(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    system,
    carrier: int,
    level: float,
) -> CZDecomposition:
    """Top-down scan over the subtree of `carrier`: stop at the first cube
    whose B_Q-average of |f| meets the level; below-threshold mass stays in
    the good part."""
    if level <= 0:
        raise PreconditionError("level must be positive")
    f.check_carrier(sigma)

    def ball_avg(cid):
        try:
            return abs_average(f, sigma, system.ball_of(cid))
        except EmptyBallError:
            return 0.0

    selected = []
    averages = {}
    whole = False
    root_avg = ball_avg(carrier)
    averages[carrier] = root_avg
    if root_avg >= level:
        selected = [carrier]
        whole = True
    else:
        stack = list(system.cube(carrier).children)
        while stack:
            cid = stack.pop()
            avg = ball_avg(cid)
            averages[cid] = avg
            if avg >= level:
                selected.append(cid)
            else:
                stack.extend(system.cube(cid).children)
        selected.sort()
    g = f.values.copy()
    b = {}
    for cid in selected:
        mem = system.cube(cid).members
        w = sigma.weights[mem]
        mean = float(np.dot(w, f.values[mem]) / w.sum())
        g[mem] = mean
        b[cid] = f.values[mem] - mean
    return CZDecomposition(carrier, level, selected, g, b, whole, averages)


def check_cz(dec: CZDecomposition, f: WeightedFunction,
             sigma: DiscreteMeasure, system) -> dict:
    """Direct verification of the decomposition invariants."""
    recon = dec.g.copy()
    disjoint = True
    seen = np.zeros(sigma.size, dtype=bool)
    mean_defect = 0.0
    for cid in dec.cubes:
        mem = system.cube(cid).members
        if np.any(seen[mem]):
            disjoint = False
        seen[mem] = True
        recon[mem] += dec.b[cid]
        w = sigma.weights[mem]
        mean_defect = max(mean_defect, abs(float(np.dot(w, dec.b[cid]))))
    maximal = True
    for cid in dec.cubes:
        parent = system.cube(cid).parent
        if parent is not None and dec.averages.get(parent, 0.0) >= dec.level:
            maximal = False
    f_l1 = float(np.dot(sigma.weights, np.abs(f.values)))
    # the split stores g = <f> on each cube; a point whose value is far
    # below that average cannot reconstruct bitwise (the float grid near
    # the average is coarser than an ulp of the value), so exactness is
    # measured at the ulp scale of the good part
    eps = np.finfo(float).eps
    tol = 8 * eps * np.maximum(np.abs(dec.g), np.abs(f.values))
    return {
        "exact": bool(np.all(np.abs(recon - f.values) <= tol)),
        "mean_defect": mean_defect,
        "mean_tol": 1e-10 * max(f_l1, 1e-300),
        "disjoint": disjoint,
        "maximal": maximal or dec.whole_cube,
        "c_g": dec.c_g,
    }


# ---------------------------------------------------------------------------
# Neighborhoods and estimate probes


def neighborhood_N_eta(sigma: DiscreteMeasure, system, cube_ids, eta: float):
    """Indices within eta * side(Q_j) of some selected cube's points."""
    if not 0 < eta < 0.1:
        raise PreconditionError("eta must lie in (0, 0.1)")
    from scipy.spatial import cKDTree

    out = np.zeros(sigma.size, dtype=bool)
    for cid in cube_ids:
        mem = system.cube(cid).members
        tree = cKDTree(sigma.points[mem])
        d, _ = tree.query(sigma.points)
        out |= d < eta * system.side(cid)
    return np.nonzero(out)[0]


@dataclass
class KeyEstimateResult:
    lhs: float
    rhs: float
    ratio: float | None
    omega: int
    r_cube: int
    tail_fraction: float
    status: str = "ok"


def key_estimate_check(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    system,
    fam,
    cid: int,
    opts: AlphaOptions | None = None,
    expansions: dict | None = None,
) -> KeyEstimateResult:
    """lhs = alpha_{f sigma}(Q); rhs = |<f>_R| alpha_sigma(R) plus the
    weighted martingale tail over the subtree of R in the adjacent system."""
    opts = opts or AlphaOptions()
    ball = system.ball_of(cid)
    omega, rid = fam.R_of(ball)
    adj = fam.systems[omega]
    local = AlphaOptions(**{**opts.__dict__})
    local.check_resolution = False
    lhs = alpha_f(f, sigma, ball, local).value
    r_ball = adj.ball_of(rid)
    a_sigma_r = alpha_number(sigma, r_ball, local).value
    f_avg_r = abs(average(f, sigma, r_ball))
    if expansions is None:
        expansions = {}
    if omega not in expansions:
        expansions[omega] = martingale_expand(f, adj)
    exp = expansions[omega]
    d = sigma.d
    ell_q = system.side(cid)
    per_level: dict = {}
    for pid in _subtree_ids(adj, rid):
        nrm = math.sqrt(exp.norm_sq(pid))
        if nrm == 0.0:
            continue
        ell_p = adj.side(pid)
        term = ell_p ** (1 + d / 2) / ell_q ** (1 + d) * nrm
        per_level[adj.cube(pid).level] = per_level.get(
            adj.cube(pid).level, 0.0
        ) + term
    tail_sum = sum(per_level.values())
    deepest = sorted(per_level)[-2:] if per_level else []
    tail = sum(per_level[k] for k in deepest)
    rhs = f_avg_r * a_sigma_r + tail_sum
    if lhs < 1e-9 and rhs < 1e-9:
        return KeyEstimateResult(lhs, rhs, None, omega, rid, 0.0,
                                 "both-negligible")
    return KeyEstimateResult(
        lhs, rhs, lhs / rhs if rhs > 0 else math.inf, omega, rid,
        tail / tail_sum if tail_sum > 0 else 0.0,
    )


@dataclass
class GoodLambdaReport:
    alpha_gl: float
    rows: list  # (lambda, epsilon or None, lhs mass, rhs mass)
    subset_ok: bool

    @property
    def all_covered(self) -> bool:
        return all(r[1] is not None for r in self.rows)


def good_lambda_probe(
    j0_values: np.ndarray,
    m_values: np.ndarray,
    weights: np.ndarray,
    alpha_gl: float = 2.0,
    eps_grid=None,
    lambda_grid=None,
) -> GoodLambdaReport:
    """For each lambda, the smallest epsilon making
    sigma({J0 f > alpha*lambda, Mf <= eps*lambda}) <= (9/10) sigma({J0 f > lambda})."""
    if alpha_gl <= 1:
        raise PreconditionError("alpha_gl must exceed 1")
    if eps_grid is None:
        eps_grid = [2.0 ** -j for j in range(1, 11)]
    if lambda_grid is None:
        pos = j0_values[j0_values > 0]
        if len(pos) == 0:
            lambda_grid = [1.0]
        else:
            lambda_grid = list(np.quantile(pos, [0.1, 0.3, 0.5, 0.7, 0.9]))
    rows = []
    subset_ok = True
    for lam in lambda_grid:
        rhs_mass = float(weights[j0_values > lam].sum())
        found = None
        for eps in sorted(eps_grid):
            lhs_mask = (j0_values > alpha_gl * lam) & (m_values <= eps * lam)
            if np.any(lhs_mask & ~(j0_values > lam)):
                subset_ok = False
            lhs_mass = float(weights[lhs_mask].sum())
            if lhs_mass <= 0.9 * rhs_mass + 1e-15:
                found = eps
                lhs_found = lhs_mass
                break
        rows.append((float(lam), found,
                     lhs_found if found is not None else None, rhs_mass))
    return GoodLambdaReport(alpha_gl, rows, subset_ok)
