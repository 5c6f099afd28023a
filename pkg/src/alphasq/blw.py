"""Exact bounded-Lipschitz distance between discrete measures.

F_B(mu, nu) is the supremum of |∫ phi d(mu - nu)| over 1-Lipschitz phi
supported in the open ball B.  On finite supports this is a linear
program: maximize the signed objective subject to pairwise Lipschitz
constraints and the support cap |phi_i| <= max(0, r_B - |x_i - z_B|).
Any feasible discrete phi extends to Lip_1(B) by a clamped McShane
extension, so the LP optimum equals the true supremum restricted to the
given supports.

Signed densities (f*sigma with sign-changing f) enter only through the
objective vector; carrier weights stay nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import CapExceededError, SolverError
from .measures import Ball, DiscreteMeasure

FEAS_TOL = 1e-9


@dataclass
class FbOptions:
    tolerance: float = 1e-9
    point_cap: int = 600
    subsample: bool = True
    seed: int = 0
    # Drop pairwise constraints provably implied by chains through a
    # third point (exact, no approximation).  Cheap detection only for
    # collinear supports, where it reduces O(M^2) rows to O(M).
    prune_collinear: bool = True


@dataclass
class FbSolution:
    value: float
    phi: np.ndarray
    points: np.ndarray
    objective: np.ndarray
    status: str  # optimal | capped | infeasible-numerics
    iterations: int
    c_star: float | None = None

    def check_feasible(self, ball: Ball, tol: float = FEAS_TOL) -> bool:
        cap = np.maximum(0.0, ball.radius - np.linalg.norm(self.points - ball.center, axis=1))
        if np.any(np.abs(self.phi) > cap + tol):
            return False
        diff = np.abs(self.phi[:, None] - self.phi[None, :])
        dist = np.linalg.norm(self.points[:, None] - self.points[None, :], axis=2)
        return bool(np.all(diff <= dist + tol))


def _merge_support(points: np.ndarray, u: np.ndarray):
    """Sum objective coefficients of coincident points."""
    if len(points) == 0:
        return points, u
    rounded = np.round(points, 12)
    _, inv, counts = np.unique(
        rounded, axis=0, return_inverse=True, return_counts=True
    )
    if np.all(counts == 1):
        return points, u
    seen = {}
    reps = []
    acc = []
    for i, g in enumerate(inv):
        if g not in seen:
            seen[g] = len(reps)
            reps.append(i)
            acc.append(0.0)
        acc[seen[g]] += u[i]
    return points[np.array(reps)], np.array(acc)


def _coarsen(points, u, ball: Ball, cap: int):
    """Deterministic grid coarsening anchored at the ball center: merge
    points cell-by-cell at their |u|-weighted barycenter, summing the
    signed coefficients.  The cell size starts at the collinear-optimal
    value and grows until at most `cap` occupied cells remain.  The
    induced F_B error is at most (total |u|) * cell size."""
    n = points.shape[1]
    anchor = ball.center - 1.1 * ball.radius
    cell = 2.2 * ball.radius / cap
    for _ in range(64):
        keys = np.floor((points - anchor) / cell).astype(np.int64)
        _, inv, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        if len(counts) <= cap:
            break
        cell *= 1.5
    m = len(counts)
    absu = np.abs(u)
    tot_abs = np.bincount(inv, weights=absu, minlength=m)
    tot_u = np.bincount(inv, weights=u, minlength=m)
    bary = np.empty((m, n))
    for axis in range(n):
        num = np.bincount(inv, weights=absu * points[:, axis], minlength=m)
        plain = np.bincount(inv, weights=points[:, axis], minlength=m)
        with np.errstate(invalid="ignore"):
            bary[:, axis] = np.where(
                tot_abs > 0, num / np.where(tot_abs > 0, tot_abs, 1.0),
                plain / counts,
            )
    keep = tot_abs > 0
    # deterministic output order: lexicographic in barycenter coordinates
    order = np.lexsort(bary[keep].T[::-1])
    return bary[keep][order], tot_u[keep][order]


def _pair_constraints(points: np.ndarray, prune_collinear: bool):
    """Sparse (A, d) with rows phi_i - phi_j in [-d_ij, d_ij]."""
    m = len(points)
    if m < 2:
        return sp.csr_matrix((0, m)), np.zeros(0)
    if prune_collinear and m > 3:
        centered = points - points.mean(axis=0)
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        if len(s) == 1 or (s[1:] <= 1e-12 * max(s[0], 1.0)).all():
            # Collinear: adjacent constraints along the line imply the rest.
            t = centered @ vt[0]
            order = np.argsort(t, kind="stable")
            i_idx, j_idx = order[:-1], order[1:]
            d = np.linalg.norm(points[i_idx] - points[j_idx], axis=1)
            rows = np.arange(m - 1)
            a = sp.csr_matrix(
                (
                    np.r_[np.ones(m - 1), -np.ones(m - 1)],
                    (np.r_[rows, rows], np.r_[i_idx, j_idx]),
                ),
                shape=(m - 1, m),
            )
            return a, d
    iu, ju = np.triu_indices(m, 1)
    d = np.linalg.norm(points[iu] - points[ju], axis=1)
    rows = np.arange(len(iu))
    a = sp.csr_matrix(
        (
            np.r_[np.ones(len(iu)), -np.ones(len(iu))],
            (np.r_[rows, rows], np.r_[iu, ju]),
        ),
        shape=(len(iu), m),
    )
    return a, d


def _prepare(points, u, ball: Ball, opts: FbOptions):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.asarray(u, dtype=float)
    points, u = _merge_support(points, u)
    cap = np.maximum(
        0.0, ball.radius - np.linalg.norm(points - ball.center, axis=1)
    )
    keep = cap > 0
    points, u, cap = points[keep], u[keep], cap[keep]
    status = "optimal"
    if len(points) > opts.point_cap:
        if not opts.subsample:
            raise CapExceededError(
                f"{len(points)} points exceed cap {opts.point_cap}"
            )
        points, u = _coarsen(points, u, ball, opts.point_cap)
        cap = np.maximum(
            0.0, ball.radius - np.linalg.norm(points - ball.center, axis=1)
        )
        status = "capped"
    return points, u, cap, status


def solve_fb(points, u, ball: Ball, opts: FbOptions | None = None) -> FbSolution:
    """Maximize u . phi over the Lip_1(B) feasible polytope."""
    opts = opts or FbOptions()
    points, u, cap, status = _prepare(points, u, ball, opts)
    if len(points) == 0:
        return FbSolution(0.0, np.zeros(0), points, u, status, 0)
    a, d = _pair_constraints(points, opts.prune_collinear)
    cons = [LinearConstraint(a, -d, d)] if a.shape[0] else []
    res = milp(-u, constraints=cons, bounds=Bounds(-cap, cap))
    if res.status != 0 or res.x is None:
        raise SolverError(f"LP failed: {res.message}")
    phi = res.x
    value = float(abs(np.dot(u, phi)))
    return FbSolution(value, phi, points, u, status, int(getattr(res, "mip_node_count", 0) or 0))


def solve_fb_min_c(points, u, quad_points, quad_w, ball: Ball, opts=None):
    """min over c of F_B(mu, c * quadrature) in a single LP.

    By minimax duality the minimum equals the supremum of u . phi over
    feasible phi with the extra constraint sum(quad_w * phi) = 0; the
    optimal c is the multiplier of that constraint.
    """
    opts = opts or FbOptions()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.asarray(u, dtype=float)
    quad_points = np.atleast_2d(np.asarray(quad_points, dtype=float))
    quad_w = np.asarray(quad_w, dtype=float)
    allpts = np.vstack([points, quad_points])
    obj = np.concatenate([u, np.zeros(len(quad_points))])
    vvec = np.concatenate([np.zeros(len(points)), quad_w])
    merged_pts, merged_obj = _merge_support(allpts, obj)
    if len(merged_pts) != len(allpts):
        # Coincident measure/quadrature nodes: rebuild v by matching.
        from scipy.spatial import cKDTree

        vacc = np.zeros(len(merged_pts))
        tree = cKDTree(merged_pts)
        _, idx = tree.query(allpts)
        for i, j in enumerate(idx):
            if i >= len(points):
                vacc[j] += quad_w[i - len(points)]
        allpts, obj, vvec = merged_pts, merged_obj, vacc
    else:
        allpts, obj = merged_pts, merged_obj
    cap = np.maximum(
        0.0, ball.radius - np.linalg.norm(allpts - ball.center, axis=1)
    )
    keep = cap > 0
    allpts, obj, vvec, cap = allpts[keep], obj[keep], vvec[keep], cap[keep]
    status = "optimal"
    if len(allpts) > opts.point_cap:
        if not opts.subsample:
            raise CapExceededError(
                f"{len(allpts)} points exceed cap {opts.point_cap}"
            )
        # Coarsen only the measure side; quadrature nodes stay.
        mu_idx = np.nonzero(vvec == 0)[0]
        q_idx = np.nonzero(vvec != 0)[0]
        budget = max(8, opts.point_cap - len(q_idx))
        if len(mu_idx) > budget:
            spts, su = _coarsen(allpts[mu_idx], obj[mu_idx], ball, budget)
            allpts = np.vstack([spts, allpts[q_idx]])
            obj = np.concatenate([su, obj[q_idx]])
            vvec = np.concatenate([np.zeros(len(spts)), vvec[q_idx]])
            cap = np.maximum(
                0.0, ball.radius - np.linalg.norm(allpts - ball.center, axis=1)
            )
            status = "capped"
    if len(allpts) == 0 or np.all(vvec == 0):
        sol = solve_fb(allpts, obj, ball, opts)
        sol.c_star = 0.0
        return sol
    a, d = _pair_constraints(allpts, opts.prune_collinear)
    a_ub = sp.vstack([a, -a]) if a.shape[0] else sp.csr_matrix((0, len(allpts)))
    b_ub = np.r_[d, d]
    res = linprog(
        -obj,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=vvec[None, :],
        b_eq=[0.0],
        bounds=np.stack([-cap, cap], axis=1),
        method="highs-ds",
    )
    if res.status != 0 or res.x is None:
        raise SolverError(f"LP failed: {res.message}")
    phi = res.x
    value = float(abs(np.dot(obj, phi)))
    c_star = float(-res.eqlin.marginals[0])
    return FbSolution(value, phi, allpts, obj, status, int(res.nit), c_star=c_star)


def f_b_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure | None,
    ball: Ball,
    opts: FbOptions | None = None,
    mu_density=None,
    nu_density=None,
) -> FbSolution:
    """F_B between two discrete measures (densities optional, signed)."""
    u_mu = mu.weights * (mu_density if mu_density is not None else 1.0)
    if nu is None:
        pts, u = mu.points, u_mu
    else:
        u_nu = nu.weights * (nu_density if nu_density is not None else 1.0)
        pts = np.vstack([mu.points, nu.points])
        u = np.concatenate([u_mu, -u_nu])
    return solve_fb(pts, u, ball, opts)


def f_b_oracle(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure | None,
    ball: Ball,
    n_probes: int = 8,
    seed: int = 0,
    n_steps: int = 600,
    mu_density=None,
    nu_density=None,
) -> float:
    """Projected-subgradient lower bound for F_B.

    Ascends u . phi from random starts with target-level (Polyak) steps;
    feasibility is enforced by iterated pairwise clamping, and every
    candidate is finished with an exact Lipschitz regularization before
    evaluation, so the best objective found is a valid lower bound on
    the LP optimum.  Polishing moves (per-coordinate ascent, a
    least-squares solve of the near-active constraints, and — on small
    supports — exact circuit augmentation over the {-1,0,1} sign
    directions admitted by the totally unimodular constraint matrix)
    recover the exact vertex once the ascent has located its face.
    """
    u_mu = mu.weights * (mu_density if mu_density is not None else 1.0)
    if nu is None:
        pts, u = mu.points, u_mu
    else:
        u_nu = nu.weights * (nu_density if nu_density is not None else 1.0)
        pts = np.vstack([mu.points, nu.points])
        u = np.concatenate([u_mu, -u_nu])
    pts, u = _merge_support(np.atleast_2d(np.asarray(pts, float)), np.asarray(u, float))
    cap = np.maximum(0.0, ball.radius - np.linalg.norm(pts - ball.center, axis=1))
    keep = cap > 0
    pts, u, cap = pts[keep], u[keep], cap[keep]
    m = len(pts)
    if m == 0:
        return 0.0
    dist = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]

    def pairwise_clamp(phi, sweeps=120):
        # Iterated pairwise clamping: split each Lipschitz violation
        # evenly between its endpoints, then clip to the support cap.
        for _ in range(sweeps):
            done = True
            for i, j in pairs:
                g = phi[i] - phi[j]
                excess = abs(g) - dist[i, j]
                if excess > 1e-14:
                    shift = 0.5 * excess * np.sign(g)
                    phi[i] -= shift
                    phi[j] += shift
                    done = False
            np.clip(phi, -cap, cap, out=phi)
            if done:
                break
        return phi

    def exact_feas(phi):
        # Clamped McShane regularization: exactly feasible in one pass.
        reg = np.min(phi[None, :] + dist, axis=1)
        return np.clip(reg, -cap, cap)

    def coord_ascent(phi):
        # Exact per-coordinate line maximization; monotone and feasible.
        for _ in range(4 * m):
            moved = False
            for i in range(m):
                if u[i] == 0.0:
                    continue
                others = [j for j in range(m) if j != i]
                if u[i] > 0:
                    hi = cap[i]
                    if others:
                        hi = min(hi, min(phi[j] + dist[i, j] for j in others))
                    if hi > phi[i] + 1e-15:
                        phi[i] = hi
                        moved = True
                else:
                    lo = -cap[i]
                    if others:
                        lo = max(lo, max(phi[j] - dist[i, j] for j in others))
                    if lo < phi[i] - 1e-15:
                        phi[i] = lo
                        moved = True
            if not moved:
                break
        return phi

    def snap(phi, tol):
        # Solve the near-active constraints as equalities (plain least
        # squares, no LP machinery) and regularize; recovers the exact
        # vertex once the ascent has identified the optimal face.
        rows, rhs = [], []
        for i in range(m):
            if abs(phi[i] - cap[i]) < tol:
                e = np.zeros(m)
                e[i] = 1.0
                rows.append(e)
                rhs.append(cap[i])
            elif abs(phi[i] + cap[i]) < tol:
                e = np.zeros(m)
                e[i] = 1.0
                rows.append(e)
                rhs.append(-cap[i])
        for i, j in pairs:
            g = phi[i] - phi[j]
            if abs(g - dist[i, j]) < tol:
                e = np.zeros(m)
                e[i], e[j] = 1.0, -1.0
                rows.append(e)
                rhs.append(dist[i, j])
            elif abs(g + dist[i, j]) < tol:
                e = np.zeros(m)
                e[i], e[j] = 1.0, -1.0
                rows.append(e)
                rhs.append(-dist[i, j])
        if not rows:
            return phi
        sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
        return exact_feas(sol)

    rng = np.random.default_rng(seed)
    best = 0.0
    best_phi = np.zeros(m)
    norm_u2 = float(np.dot(u, u)) or 1.0
    scale = ball.radius * np.sqrt(norm_u2)

    def consider(phi):
        nonlocal best, best_phi
        v = float(np.dot(u, phi))
        if abs(v) > best:
            best = abs(v)
            best_phi = phi if v >= 0 else -exact_feas(-phi)
        return abs(v)

    def polish(phi):
        for cand0 in (phi, -phi):
            cand = coord_ascent(exact_feas(cand0.copy()))
            consider(cand)
            for tol in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8):
                consider(coord_ascent(snap(cand, tol * ball.radius)))

    def polyak(phi, steps):
        # Target-level steps: aim delta above the best value seen and
        # halve delta whenever a stretch of iterations stalls.
        delta = 0.25 * scale
        stall = 0
        for _ in range(steps):
            val = float(np.dot(u, phi))
            step = max((best + delta - val) / norm_u2, 1e-15)
            phi = pairwise_clamp(phi + step * u)
            v = consider(exact_feas(phi))
            if v >= best:
                stall = 0
            else:
                stall += 1
                if stall >= 10:
                    delta *= 0.5
                    stall = 0
                    if delta < 1e-13 * scale:
                        break
        return phi

    def circuit_ascent(phi, obj, max_iter=500):
        # Constraint rows are e_i - e_j and e_i, a network (totally
        # unimodular) matrix, so every circuit direction has entries in
        # {-1, 0, 1}: augmenting along the best improving sign vector by
        # the maximal feasible step terminates at the exact optimum.
        import itertools

        signs = np.array(
            [g for g in itertools.product((-1, 0, 1), repeat=m) if any(g)],
            dtype=float,
        )
        gains = signs @ obj
        order = np.argsort(-gains)
        for _ in range(max_iter):
            improved = False
            for idx in order:
                g = signs[idx]
                if gains[idx] <= 1e-15 * scale:
                    break
                t = np.inf
                up, dn = g > 0, g < 0
                if up.any():
                    t = min(t, np.min(cap[up] - phi[up]))
                if dn.any():
                    t = min(t, np.min(cap[dn] + phi[dn]))
                dg = g[:, None] - g[None, :]
                pos = dg > 0
                if pos.any():
                    dphi = phi[:, None] - phi[None, :]
                    t = min(t, np.min((dist[pos] - dphi[pos]) / dg[pos]))
                if t > 1e-15:
                    phi += t * g
                    improved = True
                    break
            if not improved:
                break
        return phi

    for probe in range(n_probes):
        if probe == 0:
            phi = np.zeros(m)
        elif probe == 1:
            phi = exact_feas(cap * np.sign(u))
        else:
            phi = exact_feas(rng.normal(scale=ball.radius / 2, size=m))
        polish(polyak(phi, n_steps))
        # one more short run restarted from the best vertex so far
        polish(polyak(best_phi.copy(), n_steps // 3))
    if m <= 9:
        consider(exact_feas(circuit_ascent(best_phi.copy(), u)))
        consider(exact_feas(circuit_ascent(-exact_feas(-best_phi), -u)))
    return best


def f_b_seminorm_gap(mu, nu, rho, ball: Ball, opts=None) -> float:
    """F_B(mu,rho) - F_B(nu,rho) - F_B(mu,nu); <= solver tolerance."""
    a = f_b_distance(mu, rho, ball, opts).value
    b = f_b_distance(nu, rho, ball, opts).value
    c = f_b_distance(mu, nu, ball, opts).value
    return a - b - c


def dump_problem(path, points, u, ball: Ball, seed: int = 0):
    """JSON dump of an assembled LP for external cross-validation."""
    import json

    points = np.atleast_2d(np.asarray(points, float))
    obj = {
        "objective": list(map(float, u)),
        "points": [list(map(float, p)) for p in points],
        "ball": {"center": list(map(float, ball.center)), "radius": ball.radius},
        "constraints": "phi_i - phi_j <= |x_i - x_j|; |phi_i| <= max(0, r - |x_i - z|)",
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
