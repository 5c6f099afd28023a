"""Top-level acceptance battery.

Each test covers one numbered criterion and prints a single
"ACCEPTANCE n: PASS/FAIL" line with the measured quantities.  Tolerances
and runtime budgets are pinned in-line.  Run order is independent; the
expensive fixtures are cached per module.
"""

import math
import time

import numpy as np

from alphasq.alpha import (
    LIGHT,
    MEDIUM,
    AlphaOptions,
    alpha_number,
    carleson_audit,
)
from alphasq.analysis import (
    check_cz,
    cz_decompose,
    good_lambda_probe,
    martingale_expand,
    maximal_function,
    parseval_defect,
    square_function_J,
)
from alphasq.blw import f_b_distance, f_b_oracle, solve_fb
from alphasq.cubes import build_system
from alphasq.generators import generate, graph_profile, random_multiscale
from alphasq.harness import ExperimentConfig, run_equivalence
from alphasq.lpaley import DTilde, dkf_bound_check, radius_grid
from alphasq.measures import (
    Ball,
    DiscreteMeasure,
    Plane,
    WeightedFunction,
    discretize_plane_measure,
)

UNIT = Ball(np.zeros(2), 1.0)


def verdict(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def segment_measure(h):
    xs = (np.arange(int(round(1.0 / h))) + 0.5) * h
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return DiscreteMeasure(pts, np.full(len(xs), h), d=1)


# ---------------------------------------------------------------------------
# 1. LP correctness vs the independent oracle


def test_criterion_01_lp_vs_oracle():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 6))
        pts = rng.uniform(-0.95, 0.95, size=(m, 2))
        u = rng.normal(size=m)
        lp = solve_fb(pts, u, UNIT).value
        mu = DiscreteMeasure(pts, np.ones(m), d=1)
        orc = f_b_oracle(mu, None, UNIT, mu_density=u,
                         seed=int(rng.integers(1 << 30)))
        worst = max(worst, abs(lp - orc))
    two = f_b_distance(
        DiscreteMeasure(np.array([[0.5, 0.0]]), np.array([1.0]), d=1),
        DiscreteMeasure(np.array([[-0.5, 0.0]]), np.array([1.0]), d=1),
        UNIT,
    ).value
    one = f_b_distance(
        DiscreteMeasure(np.array([[0.75, 0.0]]), np.array([1.0]), d=1),
        None, UNIT,
    ).value
    elapsed = time.time() - t0
    ok = (worst <= 1e-6 and abs(two - 1.0) <= 1e-8
          and abs(one - 0.25) <= 1e-8 and elapsed < 60)
    verdict(1, ok, f"oracle gap {worst:.2e} (<=1e-6), two-Dirac "
            f"{two:.10f}, single-Dirac {one:.10f}, {elapsed:.0f}s (<60s)")


# ---------------------------------------------------------------------------
# 2. Flat exactness and similarity invariance of alpha


def test_criterion_02_alpha_flat_and_similarity():
    t0 = time.time()
    rng = np.random.default_rng(3)
    worst_flat = 0.0
    opts = AlphaOptions(check_resolution=False)
    for _ in range(20):
        angle = rng.uniform(0, math.pi)
        offset = rng.uniform(-0.3, 0.3)
        ball = Ball(rng.uniform(-1, 1, size=2), rng.uniform(0.5, 2.0))
        direction = np.array([math.cos(angle), math.sin(angle)])
        normal = np.array([-direction[1], direction[0]])
        plane = Plane(ball.center + offset * normal, direction[None, :])
        mu = discretize_plane_measure(plane, ball, c=1.0,
                                      step=ball.radius / 16)
        worst_flat = max(worst_flat, alpha_number(mu, ball, opts).value)
    seg = segment_measure(1 / 64)
    ball = Ball(np.array([0.5, 0.0]), 0.25)
    base = alpha_number(seg, ball, MEDIUM).value
    worst_sim = 0.0
    for lam in (0.5, 2.0):
        mu2 = DiscreteMeasure(seg.points * lam, seg.weights * lam, d=1)
        val = alpha_number(mu2, Ball(ball.center * lam, ball.radius * lam),
                           MEDIUM).value
        worst_sim = max(worst_sim, abs(val - base))
    theta_rot = rng.uniform(0, 2 * math.pi)
    c, s = math.cos(theta_rot), math.sin(theta_rot)
    rot = np.array([[c, -s], [s, c]])
    mu2 = DiscreteMeasure(seg.points @ rot.T, seg.weights, d=1)
    val = alpha_number(mu2, Ball(rot @ ball.center, ball.radius),
                       MEDIUM).value
    worst_sim = max(worst_sim, abs(val - base))
    elapsed = time.time() - t0
    ok = worst_flat <= 1e-6 and worst_sim <= 1e-6 and elapsed < 300
    verdict(2, ok, f"flat alpha max {worst_flat:.2e} (<=1e-6), similarity "
            f"defect {worst_sim:.2e} (<=1e-6), {elapsed:.0f}s (<300s)")


# ---------------------------------------------------------------------------
# 3. Martingale identities at 1e4 points


def test_criterion_03_martingale_identities():
    t0 = time.time()
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 1, size=(10 ** 4, 2))
    mu = DiscreteMeasure(pts, np.full(len(pts), 1e-4), d=1)
    system = build_system(mu)
    worst_parseval = 0.0
    worst_recon = 0.0
    spots = rng.integers(0, mu.size, size=100)
    for j in range(50):
        f = WeightedFunction(rng.normal(size=mu.size))
        exp = martingale_expand(f, system)
        worst_parseval = max(worst_parseval,
                             parseval_defect(f, system, exp))
        if j < 2:  # 100 spot checks split over the first two functions
            for i in spots[j * 50:(j + 1) * 50]:
                err = abs(exp.reconstruct(int(i), 0) - f.values[i])
                worst_recon = max(worst_recon, err)
    elapsed = time.time() - t0
    ok = (worst_parseval <= 1e-10 and worst_recon <= 1e-10
          and elapsed < 60)
    verdict(3, ok, f"parseval defect {worst_parseval:.2e} (<=1e-10), "
            f"reconstruction error {worst_recon:.2e} (<=1e-10), "
            f"{elapsed:.0f}s (<60s)")


# ---------------------------------------------------------------------------
# 4. Calderon-Zygmund invariants on the flat baseline


def test_criterion_04_cz_invariants():
    t0 = time.time()
    mu = segment_measure(2 ** -8)
    system = build_system(mu)
    worst_cg = 0.0
    all_ok = True
    for seed in range(50):
        profile, _, _ = graph_profile({"slope": 1.0, "n_modes": 5},
                                      seed=seed)
        f = WeightedFunction(1.0 + profile(mu.points[:, 0]))
        level = float(np.quantile(np.abs(f.values), 0.7))
        dec = cz_decompose(f, mu, system, 0, level)
        rep = check_cz(dec, f, mu, system)
        all_ok &= (rep["exact"] and rep["disjoint"] and rep["maximal"]
                   and rep["mean_defect"] <= rep["mean_tol"])
        worst_cg = max(worst_cg, rep["c_g"])
    elapsed = time.time() - t0
    ok = all_ok and worst_cg <= 3.0 and elapsed < 60
    verdict(4, ok, f"invariants {'ok' if all_ok else 'VIOLATED'}, "
            f"C_g {worst_cg:.3f} (<=3), {elapsed:.0f}s (<60s)")


# ---------------------------------------------------------------------------
# 5. Smoothing-difference operator structure at 5e3 points


def kernel_lipschitz(dt, mu, idx, r):
    """max discrete difference quotient of the D-tilde kernel row, scaled
    by r^(d+1)."""
    worst = 0.0
    order = np.argsort(mu.points[:, 0])
    xs = mu.points[order]
    for i in idx:
        row = dt.kernel_row(int(i))[order]
        near = np.abs(xs[:, 0] - mu.points[i, 0]) <= 5 * r
        vals = row[near]
        gaps = np.linalg.norm(np.diff(xs[near], axis=0), axis=1)
        quot = np.abs(np.diff(vals)) / gaps
        worst = max(worst, float(quot.max()))
    return worst * r ** (mu.d + 1)


def test_criterion_05_lpaley_structure():
    t0 = time.time()
    mu = segment_measure(1 / 5000)
    ks, radii = radius_grid(mu)
    r = radii[len(radii) // 2]
    dt = DTilde(mu, r)
    d_one = float(np.abs(dt.apply(np.ones(mu.size))).max())
    i = mu.size // 2
    row = dt.kernel_row(i)
    dist = np.linalg.norm(mu.points - mu.points[i], axis=1)
    support_exact = bool(np.all(row[dist >= 4 * r] == 0.0))
    rng = np.random.default_rng(0)
    f, g = rng.normal(size=(2, mu.size))
    w = mu.weights
    a = float(np.dot(w * dt.apply(f), g))
    b = float(np.dot(w * f, dt.apply(g)))
    sa_defect = abs(a - b) / max(abs(a), abs(b), 1e-300)
    idx = rng.integers(0, mu.size, size=3)
    lip_r = kernel_lipschitz(dt, mu, idx, r)
    dt_half = DTilde(mu, r / 2)
    lip_half = kernel_lipschitz(dt_half, mu, idx, r / 2)
    stable = max(lip_r / lip_half, lip_half / lip_r)
    elapsed = time.time() - t0
    ok = (d_one <= 1e-12 and support_exact and sa_defect <= 1e-10
          and stable <= 2.0 and elapsed < 300)
    verdict(5, ok, f"D~1 {d_one:.2e} (<=1e-12), support exact "
            f"{support_exact}, self-adjoint defect {sa_defect:.2e} "
            f"(<=1e-10), Lipschitz ratio {stable:.2f} (<=2), "
            f"{elapsed:.0f}s (<300s)")


# ---------------------------------------------------------------------------
# 6. Norm equivalence at desk scale


def equivalence_config(h):
    return ExperimentConfig(
        generator={"kind": "segment", "params": {}, "h": h, "seed": 0},
        functions={"kind": "random_multiscale",
                   "params": {"per_level": 2, "max_level": 6},
                   "count": 20, "seed": 300},
        p_list=[2.0, 1.5, 3.0],
        scale_range=(0, 7),
        alpha_profile="light",
        include_lpaley=False,
    )


def test_criterion_06_norm_equivalence():
    t0 = time.time()
    reports = {h: run_equivalence(equivalence_config(h))
               for h in (2 ** -12, 2 ** -10)}
    cs = {}
    for p in (2.0, 1.5, 3.0):
        cs[p] = reports[2 ** -12].summary["per_p"][str(p)]["C"]
    fine = {c["f_seed"]: c["ratio_J"]
            for c in reports[2 ** -12].cells
            if c["status"] == "ok" and c["p"] == 2.0}
    coarse = {c["f_seed"]: c["ratio_J"]
              for c in reports[2 ** -10].cells
              if c["status"] == "ok" and c["p"] == 2.0}
    changes = [abs(fine[s] - coarse[s]) / fine[s]
               for s in sorted(set(fine) & set(coarse))]
    max_change = max(changes)
    elapsed = time.time() - t0
    ok = (cs[2.0] <= 50 and cs[1.5] <= 100 and cs[3.0] <= 100
          and max_change < 0.25 and len(changes) == 20 and elapsed < 1800)
    verdict(6, ok, f"C(p=2) {cs[2.0]:.2f} (<=50), C(1.5) {cs[1.5]:.2f}, "
            f"C(3) {cs[3.0]:.2f} (<=100), max per-f change "
            f"{max_change:.1%} (<25%), {elapsed:.0f}s (<1800s)")


# ---------------------------------------------------------------------------
# 7. Carleson audit vs graph slope


def slope_constant(slope, h):
    mu = generate("lipschitz_graph", {"slope": slope}, h=h, seed=7)
    system = build_system(mu)
    balls = []
    for x0 in (0.3, 0.5, 0.7):
        i = int(np.argmin(np.abs(mu.points[:, 0] - x0)))
        balls.append(Ball(mu.points[i], 0.25))
    # levels 0-3 carry a slope-independent alpha floor (coarse cubes are
    # never fully inside the audit balls or sit at the quadrature floor);
    # the slope signal lives in levels 4-6
    return carleson_audit(mu, system, balls, opts=MEDIUM,
                          scale_range=(4, 6)).constant


def test_criterion_07_carleson_slope():
    t0 = time.time()
    consts = {}
    stab = {}
    for slope in (0.1, 0.2, 0.4):
        fine = slope_constant(slope, 2 ** -9)
        coarse = slope_constant(slope, 2 ** -8)
        consts[slope] = fine
        stab[slope] = abs(fine - coarse) / fine
    elapsed = time.time() - t0
    ok = (consts[0.4] >= 1.5 * consts[0.1]
          and all(v <= 0.25 for v in stab.values()) and elapsed < 1200)
    verdict(7, ok, f"C(0.1)={consts[0.1]:.4f} C(0.2)={consts[0.2]:.4f} "
            f"C(0.4)={consts[0.4]:.4f} (ratio "
            f"{consts[0.4] / consts[0.1]:.2f} >=1.5), refinement change "
            f"max {max(stab.values()):.1%} (<=25%), {elapsed:.0f}s (<1200s)")


# ---------------------------------------------------------------------------
# 8. Pointwise domination of D~_k f


def domination_max(h):
    mu = generate("lipschitz_graph", {"slope": 0.2}, h=h, seed=7)
    system = build_system(mu)
    f = random_multiscale(mu, system, {"per_level": 2, "max_level": 5},
                          seed=40)
    ks, radii = radius_grid(mu)
    rng = np.random.default_rng(8)
    terms = {k: DTilde(mu, rk).apply(f.values)
             for k, rk in zip(ks, radii)}
    worst = 0.0
    used = 0
    for _ in range(200):
        i = int(rng.integers(mu.size))
        k = ks[int(rng.integers(len(ks)))]
        out = dkf_bound_check(f, mu, system, i, k, alpha_opts=LIGHT,
                              dvalue=float(terms[k][i]))
        if out.status != "ok" or out.ratio is None:
            continue
        used += 1
        worst = max(worst, out.ratio)
    return worst, used


def test_criterion_08_pointwise_domination():
    t0 = time.time()
    fine, used_f = domination_max(2 ** -9)
    coarse, used_c = domination_max(2 ** -8)
    change = abs(fine - coarse) / fine
    elapsed = time.time() - t0
    ok = (math.isfinite(fine) and math.isfinite(coarse) and used_f > 100
          and change < 0.5 and elapsed < 900)
    verdict(8, ok, f"max ratio {fine:.3f} (fine, n={used_f}) vs "
            f"{coarse:.3f} (coarse, n={used_c}), change {change:.1%} "
            f"(<50%), {elapsed:.0f}s (<900s)")


# ---------------------------------------------------------------------------
# 9. Good-lambda probe on the flat baseline


def test_criterion_09_good_lambda():
    t0 = time.time()
    mu = segment_measure(2 ** -8)
    system = build_system(mu)
    f = random_multiscale(mu, system, {"per_level": 2, "max_level": 5},
                          seed=42)
    profile = square_function_J(f, mu, system, scale_range=(0, 6),
                                opts=LIGHT)
    m_vals = np.array([
        maximal_function(f, mu, i, system=system)
        for i in range(mu.size)
    ])
    rep = good_lambda_probe(profile.values, m_vals, mu.weights,
                            alpha_gl=2.0)
    elapsed = time.time() - t0
    ok = rep.all_covered and rep.subset_ok and elapsed < 600
    eps_found = [r[1] for r in rep.rows]
    verdict(9, ok, f"epsilon per lambda {eps_found} (all found), "
            f"subset property {rep.subset_ok}, {elapsed:.0f}s (<600s)")


# ---------------------------------------------------------------------------
# 10. Determinism of CSV outputs


def test_criterion_10_determinism(tmp_path):
    t0 = time.time()
    blobs = []
    for run in ("a", "b"):
        config = ExperimentConfig(
            generator={"kind": "lipschitz_graph", "params": {"slope": 0.2},
                       "h": 2 ** -6, "seed": 1},
            functions={"kind": "random_multiscale",
                       "params": {"per_level": 1, "max_level": 3},
                       "count": 2, "seed": 17},
            p_list=[2.0],
            scale_range=(0, 3),
            alpha_profile="light",
            include_lpaley=True,
            outdir=str(tmp_path / run),
        )
        run_equivalence(config)
        blob = b""
        for name in sorted((tmp_path / run).rglob("*.csv")):
            blob += name.read_bytes()
        blobs.append(blob)
    elapsed = time.time() - t0
    ok = blobs[0] == blobs[1] and len(blobs[0]) > 0
    verdict(10, ok, f"re-run CSVs byte-identical "
            f"({len(blobs[0])} bytes), {elapsed:.0f}s")
