import numpy as np
import pytest

from alphasq.cubes import build_system
from alphasq.errors import PreconditionError, ResolutionError
from alphasq.lpaley import (
    DTilde,
    LPOperators,
    Mollifier,
    dkf_bound_check,
    kernel_d_tilde,
    lp_square_function,
    radius_grid,
)
from alphasq.measures import DiscreteMeasure, WeightedFunction


def segment_measure(h=1 / 128):
    xs = (np.arange(int(round(1.0 / h))) + 0.5) * h
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return DiscreteMeasure(pts, np.full(len(xs), h), d=1)


@pytest.fixture(scope="module")
def seg():
    return segment_measure(1 / 128)


class TestMollifier:
    def test_normalization_constant(self):
        for dim, m in ((1, 2), (2, 4), (3, 3)):
            phi = Mollifier(exponent=m, dim=dim)
            step = 2e-3 if dim <= 2 else 2e-2
            assert phi.quadrature_integral(step) == pytest.approx(
                1.0, rel=5e-3
            )

    def test_support(self):
        phi = Mollifier()
        assert np.all(phi.profile([1.0, 1.5, 2.0]) == 0.0)
        assert phi.profile([0.0])[0] == pytest.approx(phi.constant)

    def test_exponent_guard(self):
        with pytest.raises(PreconditionError):
            Mollifier(exponent=0)


class TestOperators:
    def test_s_tilde_preserves_constants(self, seg):
        ops = LPOperators(seg, 0.05)
        one = np.ones(seg.size)
        assert np.abs(ops.apply_S_tilde(one) - 1.0).max() <= 1e-13

    def test_d_tilde_kills_constants(self, seg):
        dt = DTilde(seg, 0.05)
        assert np.abs(dt.apply(np.ones(seg.size))).max() <= 1e-12

    def test_kernel_support_is_4r(self, seg):
        r = 0.04
        dt = DTilde(seg, r)
        i = seg.size // 2
        row = dt.kernel_row(i)
        dist = np.linalg.norm(seg.points - seg.points[i], axis=1)
        assert np.all(row[dist >= 4 * r] == 0.0)
        assert np.any(row[dist < 4 * r] != 0.0)

    def test_self_adjoint(self, seg):
        rng = np.random.default_rng(0)
        f = rng.normal(size=seg.size)
        g = rng.normal(size=seg.size)
        dt = DTilde(seg, 0.05)
        w = seg.weights
        a = float(np.dot(w * dt.apply(f), g))
        b = float(np.dot(w * f, dt.apply(g)))
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)

    def test_radius_below_resolution_raises(self, seg):
        with pytest.raises(ResolutionError):
            LPOperators(seg, 1e-4)

    def test_radius_guard(self, seg):
        with pytest.raises(PreconditionError):
            LPOperators(seg, 0.0)


class TestRadiusGrid:
    def test_bounds(self, seg):
        ks, radii = radius_grid(seg)
        assert radii
        lo = 4 * seg.median_spacing()
        hi = seg.diameter / 4
        for k, r in zip(ks, radii):
            assert r == 2.0 ** -k
            assert lo <= r <= hi

    def test_empty_when_too_coarse(self):
        mu = segment_measure(1 / 4)
        ks, radii = radius_grid(mu)
        assert ks == [] and radii == []


class TestSquareFunction:
    def test_values_and_terms(self, seg):
        rng = np.random.default_rng(1)
        f = WeightedFunction(rng.normal(size=seg.size))
        res = lp_square_function(f, seg, keep_terms=True)
        assert np.all(res.values >= 0)
        acc = np.zeros(seg.size)
        for k in res.ks:
            acc += res.per_scale[k] ** 2
        assert np.allclose(res.values, np.sqrt(acc))

    def test_inadmissible_scales_logged(self, seg):
        f = WeightedFunction(np.ones(seg.size))
        res = lp_square_function(f, seg, ks=[0, 50])
        assert set(res.skipped) == {0, 50}
        assert res.ks == []


class TestDkfBound:
    def test_bound_check(self, seg):
        system = build_system(seg)
        rng = np.random.default_rng(2)
        f = WeightedFunction(rng.normal(size=seg.size))
        ks, _ = radius_grid(seg)
        out = dkf_bound_check(f, seg, system, seg.size // 2, ks[-1])
        assert out.status in ("ok", "no-cube")
        if out.status == "ok":
            assert out.lhs >= 0 and out.rhs >= 0
            assert out.ell_over_r is not None and out.ell_over_r > 0
