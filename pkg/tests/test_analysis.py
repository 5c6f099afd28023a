import math

import numpy as np
import pytest

from alphasq.alpha import LIGHT
from alphasq.analysis import (
    candidate_balls,
    check_cz,
    continuous_square_function,
    cz_decompose,
    good_lambda_probe,
    key_estimate_check,
    martingale_expand,
    maximal_function,
    neighborhood_N_eta,
    parseval_defect,
    split_J0,
    square_function_J,
    square_function_J0,
)
from alphasq.cubes import AdjacentFamily, build_system
from alphasq.errors import PreconditionError
from alphasq.measures import DiscreteMeasure, WeightedFunction


def segment_measure(h=1 / 128):
    xs = (np.arange(int(round(1.0 / h))) + 0.5) * h
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return DiscreteMeasure(pts, np.full(len(xs), h), d=1)


@pytest.fixture(scope="module")
def carrier():
    mu = segment_measure(1 / 128)
    return mu, build_system(mu)


class TestMartingale:
    def test_parseval(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(0)
        for _ in range(5):
            f = WeightedFunction(rng.normal(size=mu.size))
            assert parseval_defect(f, system) <= 1e-10

    def test_reconstruction_exact(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(1)
        f = WeightedFunction(rng.normal(size=mu.size))
        exp = martingale_expand(f, system)
        for i in rng.choice(mu.size, size=20, replace=False):
            rec = exp.reconstruct(int(i), 0)
            assert rec == pytest.approx(f.values[i], abs=1e-12)

    def test_reconstruction_from_intermediate_cube(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(2)
        f = WeightedFunction(rng.normal(size=mu.size))
        exp = martingale_expand(f, system)
        cid = system.levels[2][0]
        i = int(system.cube(cid).members[0])
        assert exp.reconstruct(i, cid) == pytest.approx(
            f.values[i], abs=1e-12
        )

    def test_wrong_start_cube_rejected(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.ones(mu.size))
        exp = martingale_expand(f, system)
        cid = system.levels[2][0]
        outside = int(np.setdiff1d(np.arange(mu.size),
                                   system.cube(cid).members)[0])
        with pytest.raises(PreconditionError):
            exp.reconstruct(outside, cid)

    def test_leaf_has_no_coefficients(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.arange(mu.size, dtype=float))
        exp = martingale_expand(f, system)
        leaf = next(c for c in system.cubes if c.is_leaf)
        assert exp.delta(leaf.id) is None
        assert exp.norm_sq(leaf.id) == 0.0


class TestSquareFunction:
    def test_profile_structure(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(3)
        f = WeightedFunction(rng.normal(size=mu.size))
        profile = square_function_J(f, mu, system, scale_range=(0, 3),
                                    opts=LIGHT)
        assert np.all(profile.values >= 0)
        for i in (0, mu.size // 2):
            assert profile.values[i] ** 2 == pytest.approx(
                profile.value_sq(i), rel=1e-12
            )
            for cid, a, b in profile.contributions[i]:
                assert i in system.cube(cid).members
                assert a >= 0 and b >= 0

    def test_j0_restricts_to_subtree(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(4)
        f = WeightedFunction(rng.normal(size=mu.size))
        q0 = system.levels[1][0]
        profile = square_function_J0(f, mu, system, q0,
                                     scale_range=(1, 4), opts=LIGHT)
        members = set(int(i) for i in system.cube(q0).members)
        assert set(profile.contributions) == members
        for rows in profile.contributions.values():
            for cid, _, _ in rows:
                anc = set(system.ancestors(cid)) | {cid}
                assert q0 in anc

    def test_split_j0_partitions_energy(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(5)
        f = WeightedFunction(rng.normal(size=mu.size))
        q0 = system.levels[1][0]
        s = system.cube(q0).children[0]
        profile = square_function_J0(f, mu, system, q0, opts=LIGHT,
                                     scale_range=(1, 4))
        j1, j2 = split_J0(profile, system, q0, s)
        for i in j1:
            total = profile.value_sq(i)
            # cubes outside both the s-subtree and the chain above s do
            # not touch members of s
            assert j1[i] + j2 == pytest.approx(total, rel=1e-9, abs=1e-18)

    def test_continuous_square_function_runs(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.sin(5 * mu.points[:, 0]))
        skipped = []
        val = continuous_square_function(
            f, mu, [0.5, 0.0], np.geomspace(0.02, 0.25, 5), LIGHT,
            skipped_log=skipped,
        )
        assert val >= 0.0
        far = continuous_square_function(
            f, mu, [9.0, 9.0], [0.01, 0.02], LIGHT, skipped_log=skipped
        )
        assert far == 0.0 and skipped  # out-of-support radii are logged


class TestMaximalFunction:
    def test_constant_function(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.full(mu.size, 3.0))
        m = maximal_function(f, mu, mu.size // 2, system=system)
        assert m == pytest.approx(3.0, rel=1e-12)

    def test_dominates_point_value(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(6)
        f = WeightedFunction(rng.normal(size=mu.size))
        i = int(np.argmax(np.abs(f.values)))
        m = maximal_function(f, mu, i, system=system)
        assert m >= abs(f.values[i]) * (1 - 1e-9)

    def test_candidate_balls_contain_point(self, carrier):
        mu, system = carrier
        i = 10
        balls = candidate_balls(mu, system, i, n_random=8)
        x = mu.points[i]
        containing = [
            b for b in balls if np.linalg.norm(x - b.center) < b.radius
        ]
        assert len(containing) >= len(balls) - 1

    def test_needs_balls_or_system(self, carrier):
        mu, _ = carrier
        f = WeightedFunction(np.ones(mu.size))
        with pytest.raises(PreconditionError):
            maximal_function(f, mu, 0)


class TestCZ:
    def test_invariants_on_random_f(self, carrier):
        mu, system = carrier
        rng = np.random.default_rng(7)
        for _ in range(5):
            f = WeightedFunction(rng.normal(size=mu.size) ** 2)
            level = float(np.quantile(np.abs(f.values), 0.8))
            dec = cz_decompose(f, mu, system, 0, level)
            rep = check_cz(dec, f, mu, system)
            assert rep["exact"]
            assert rep["mean_defect"] <= rep["mean_tol"]
            assert rep["disjoint"]
            assert rep["maximal"]

    def test_whole_cube_flag(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.full(mu.size, 5.0))
        dec = cz_decompose(f, mu, system, 0, 1.0)
        assert dec.whole_cube
        assert dec.cubes == [0]

    def test_level_guard(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.ones(mu.size))
        with pytest.raises(PreconditionError):
            cz_decompose(f, mu, system, 0, 0.0)

    def test_high_level_selects_nothing(self, carrier):
        mu, system = carrier
        f = WeightedFunction(np.ones(mu.size))
        dec = cz_decompose(f, mu, system, 0, 100.0)
        assert dec.cubes == []
        assert np.array_equal(dec.g, f.values)


class TestNeighborhood:
    def test_eta_guard(self, carrier):
        mu, system = carrier
        for eta in (0.0, 0.1, 0.5):
            with pytest.raises(PreconditionError):
                neighborhood_N_eta(mu, system, [0], eta)

    def test_members_included(self, carrier):
        mu, system = carrier
        cid = system.levels[2][0]
        idx = neighborhood_N_eta(mu, system, [cid], 0.05)
        assert set(system.cube(cid).members).issubset(set(idx))


class TestEstimateProbes:
    def test_key_estimate(self, carrier):
        mu, system = carrier
        fam = AdjacentFamily(mu, n_systems=4)
        rng = np.random.default_rng(8)
        f = WeightedFunction(rng.normal(size=mu.size))
        cid = system.levels[4][3]
        out = key_estimate_check(f, mu, system, fam, cid, opts=LIGHT)
        assert out.lhs >= 0 and out.rhs >= 0
        assert out.status in ("ok", "both-negligible")
        if out.status == "ok":
            assert out.ratio is not None and math.isfinite(out.ratio)

    def test_good_lambda_finds_eps(self):
        rng = np.random.default_rng(9)
        j0 = np.abs(rng.normal(size=500))
        m = j0 + np.abs(rng.normal(size=500))  # maximal dominates
        w = np.full(500, 1 / 500)
        rep = good_lambda_probe(j0, m, w, alpha_gl=2.0)
        assert rep.all_covered
        assert rep.subset_ok
        for lam, eps, lhs, rhs in rep.rows:
            assert eps in [2.0 ** -j for j in range(1, 11)]
            assert lhs <= 0.9 * rhs + 1e-15

    def test_good_lambda_alpha_guard(self):
        with pytest.raises(PreconditionError):
            good_lambda_probe(np.ones(3), np.ones(3), np.ones(3),
                              alpha_gl=1.0)
