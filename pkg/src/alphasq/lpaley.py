"""Smoothing and difference operators with explicit kernels.

S_r g = phi_r*(g sigma) / phi_r*sigma with a polynomial bump phi, the
symmetrized S~_r = S_r W_r S_r^* (so S~_r 1 = 1 exactly), and the
difference D~_r = S~_r - S~_{2r} whose kernel is supported in B(x, 4r).
All applications are matrix-free over a sparse neighbor structure;
explicit kernel rows exist for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import gamma

from .errors import PreconditionError, ResolutionError
from .measures import DiscreteMeasure, WeightedFunction


@dataclass(frozen=True)
class Mollifier:
    """phi(y) = c (1 - |y|^2)^m on |y| < 1, normalized so the integral
    over the ambient space is 1."""

    exponent: int = 4
    dim: int = 2  # ambient dimension used for the normalization

    def __post_init__(self):
        if self.exponent < 1:
            raise PreconditionError("exponent must be >= 1")

    @property
    def constant(self) -> float:
        n, m = self.dim, self.exponent
        # int_{|y|<1} (1-|y|^2)^m dy = pi^{n/2} m! / Gamma(n/2 + m + 1)
        return float(gamma(n / 2 + m + 1) / (math.pi ** (n / 2) * gamma(m + 1)))

    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        inside = rho < 1.0
        out[inside] = self.constant * (1.0 - rho[inside] ** 2) ** self.exponent
        return out

    def quadrature_integral(self, step: float) -> float:
        """Midpoint-grid check of int phi over the ambient space."""
        axes = [np.arange(-1 + step / 2, 1, step)] * self.dim
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        rho = np.linalg.norm(grid, axis=-1).ravel()
        return float(self.profile(rho).sum() * step ** self.dim)


class LPOperators:
    """phi_r smoothing at one radius over one carrier measure."""

    def __init__(self, sigma: DiscreteMeasure, r: float,
                 mollifier: Mollifier | None = None):
        if r <= 0:
            raise PreconditionError("radius must be positive")
        sigma.check_radius(r)
        self.sigma = sigma
        self.r = float(r)
        self.mollifier = mollifier or Mollifier(dim=sigma.n)
        tree = sigma.tree()
        coo = tree.sparse_distance_matrix(
            tree, self.r, output_type="coo_matrix"
        )
        # phi_r(x - y) = r^{-d} phi((x - y)/r); strict support |x-y| < r
        vals = self.mollifier.profile(coo.data / self.r) / self.r ** sigma.d
        self.kernel = sparse.csr_matrix(
            (vals, (coo.row, coo.col)), shape=coo.shape
        )
        w = sigma.weights
        self.denom = self.kernel @ w  # phi_r * sigma at each point
        if np.any(self.denom <= 0):
            raise ResolutionError(
                f"phi_{self.r:g}*sigma vanishes at "
                f"{int((self.denom <= 0).sum())} points; radius below resolution"
            )
        # S_r^* 1 (z) = sum_x phi_r(x-z) w_x / denom_x
        self.s_star_one = self.kernel.T @ (w / self.denom)
        self.w_diag = 1.0 / self.s_star_one

    def apply_S(self, g: np.ndarray) -> np.ndarray:
        return (self.kernel @ (self.sigma.weights * g)) / self.denom

    def apply_S_star(self, h: np.ndarray) -> np.ndarray:
        return self.kernel.T @ (self.sigma.weights * h / self.denom)

    def apply_S_tilde(self, g: np.ndarray) -> np.ndarray:
        return self.apply_S(self.w_diag * self.apply_S_star(g))

    def s_tilde_row(self, i: int) -> np.ndarray:
        """Dense kernel row s~_r(x_i, .): sum over z of
        s_r(x,z) W(z) w_z phi_r(z-y)/denom_y."""
        v = np.asarray(
            self.kernel.getrow(i).todense()
        ).ravel() / self.denom[i]
        mid = v * self.w_diag * self.sigma.weights
        return (self.kernel.T @ mid) / self.denom


class DTilde:
    """D~_r = S~_r - S~_{2r}."""

    def __init__(self, sigma: DiscreteMeasure, r: float,
                 mollifier: Mollifier | None = None):
        self.sigma = sigma
        self.r = float(r)
        self.fine = LPOperators(sigma, r, mollifier)
        self.coarse = LPOperators(sigma, 2 * r, mollifier)

    def apply(self, g: np.ndarray) -> np.ndarray:
        return self.fine.apply_S_tilde(g) - self.coarse.apply_S_tilde(g)

    def kernel_row(self, i: int) -> np.ndarray:
        return self.fine.s_tilde_row(i) - self.coarse.s_tilde_row(i)


def S_r(g: np.ndarray, sigma: DiscreteMeasure, r: float,
        mollifier: Mollifier | None = None) -> np.ndarray:
    return LPOperators(sigma, r, mollifier).apply_S(np.asarray(g, float))


def D_tilde_r(g: np.ndarray, sigma: DiscreteMeasure, r: float,
              mollifier: Mollifier | None = None) -> np.ndarray:
    return DTilde(sigma, r, mollifier).apply(np.asarray(g, float))


def kernel_d_tilde(i: int, r: float, sigma: DiscreteMeasure,
                   mollifier: Mollifier | None = None) -> np.ndarray:
    return DTilde(sigma, r, mollifier).kernel_row(i)


def radius_grid(sigma: DiscreteMeasure):
    """Dyadic radii r_k = 2^-k restricted to [4*spacing, diam/4] so that
    both S_r and S_{2r} resolve.  Returns (ks, radii)."""
    lo = 4.0 * sigma.median_spacing()
    hi = sigma.diameter / 4.0
    ks, radii = [], []
    if hi <= lo:
        return ks, radii
    k_lo = int(math.ceil(-math.log2(hi)))
    k_hi = int(math.floor(-math.log2(lo)))
    for k in range(k_lo, k_hi + 1):
        rk = 2.0 ** -k
        if lo <= rk <= hi:
            ks.append(k)
            radii.append(rk)
    return ks, radii


@dataclass
class LPSquareResult:
    values: np.ndarray
    ks: list
    radii: list
    skipped: list
    per_scale: dict = field(default_factory=dict)


def lp_square_function(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    ks=None,
    mollifier: Mollifier | None = None,
    keep_terms: bool = False,
) -> LPSquareResult:
    """(sum_k |D~_{r_k} f|^2)^{1/2} pointwise over the admissible dyadic
    radii; inadmissible k are skipped and logged."""
    f.check_carrier(sigma)
    auto_ks, auto_r = radius_grid(sigma)
    admissible = dict(zip(auto_ks, auto_r))
    if ks is None:
        ks = auto_ks
    acc = np.zeros(sigma.size)
    used_k, used_r, skipped = [], [], []
    per_scale = {}
    for k in ks:
        if k not in admissible:
            skipped.append(k)
            continue
        rk = admissible[k]
        try:
            term = DTilde(sigma, rk, mollifier).apply(f.values)
        except ResolutionError:
            skipped.append(k)
            continue
        acc += term ** 2
        used_k.append(k)
        used_r.append(rk)
        if keep_terms:
            per_scale[k] = term
    return LPSquareResult(np.sqrt(acc), used_k, used_r, skipped, per_scale)


@dataclass
class DkfResult:
    lhs: float
    rhs: float
    ratio: float | None
    cube: int | None
    ell_over_r: float | None
    status: str = "ok"


def dkf_bound_check(
    f: WeightedFunction,
    sigma: DiscreteMeasure,
    system,
    point_index: int,
    k: int,
    alpha_opts=None,
    dvalue: float | None = None,
    alphas_sigma=None,
    alphas_f=None,
) -> DkfResult:
    """Pointwise domination |D~_k f(x)| vs
    alpha_{f sigma}(Q) + |f|_{B_Q} alpha_sigma(Q) where Q is the smallest
    cube containing x with supp d~_k(x,.) inside 0.5 B_Q."""
    from .alpha import AlphaOptions, alpha_f, alpha_number
    from .measures import abs_average

    rk = 2.0 ** -k
    if dvalue is None:
        dvalue = float(DTilde(sigma, rk).apply(f.values)[point_index])
    x = sigma.points[point_index]
    chosen = None
    for lev in range(system.depth, -1, -1):
        cid = system.cube_at(point_index, lev)
        z = system.center_point(cid)
        if np.linalg.norm(x - z) + 4 * rk <= 2.0 * system.side(cid):
            chosen = cid
            break
    if chosen is None:
        return DkfResult(abs(dvalue), 0.0, None, None, None, "no-cube")
    ball = system.ball_of(chosen)
    opts = alpha_opts or AlphaOptions()
    local = AlphaOptions(**{**opts.__dict__})
    local.check_resolution = False
    if alphas_f is not None and chosen in alphas_f:
        a_f = alphas_f[chosen].value
    else:
        a_f = alpha_f(f, sigma, ball, local).value
    if alphas_sigma is not None and chosen in alphas_sigma:
        a_s = alphas_sigma[chosen].value
    else:
        a_s = alpha_number(sigma, ball, local).value
    rhs = a_f + abs_average(f, sigma, ball) * a_s
    lhs = abs(dvalue)
    ratio = lhs / rhs if rhs > 1e-15 else None
    return DkfResult(lhs, rhs, ratio, chosen, system.side(chosen) / rk)
