"""Weighted point-cloud measures, balls, planes and related primitives.

A :class:`DiscreteMeasure` is a finite collection of distinct points in
R^n with nonnegative weights; it stands in for a d-Ahlfors-regular
measure (or a quadrature of d-dimensional Hausdorff measure on a plane)
at the resolution of the sampling.  Real-valued densities are carried
separately by :class:`WeightedFunction`, so the carrier weights stay
nonnegative even when the density changes sign.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateQuadratureError,
    DimensionMismatchError,
    EmptyBallError,
    NegativeWeightError,
    ParseError,
    PreconditionError,
    ResolutionError,
)

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Ball:
    """Open ball B(center, radius)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points strictly inside the (open) ball."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts - self.center, axis=1) < self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


@dataclass(frozen=True)
class Plane:
    """Affine d-plane in R^n: base point plus orthonormal frame rows."""

    base: np.ndarray
    frame: np.ndarray  # shape (d, n), orthonormal rows

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(frame.shape[0]), atol=1e-12):
            raise ValueError("plane frame is not orthonormal to 1e-12")
        if frame.shape[1] != base.shape[0]:
            raise DimensionMismatchError("frame/base ambient dimensions differ")

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    def project_coords(self, points) -> np.ndarray:
        """In-plane coordinates of the orthogonal projections."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.base) @ self.frame.T

    def embed(self, coords) -> np.ndarray:
        """Map in-plane coordinates back to ambient points."""
        c = np.atleast_2d(np.asarray(coords, dtype=float))
        return self.base + c @ self.frame

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the plane."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.base
        tang = (rel @ self.frame.T) @ self.frame
        return np.linalg.norm(rel - tang, axis=1)

    @staticmethod
    def from_pca(points, weights, d: int) -> "Plane":
        """Weighted-PCA plane: top-d principal frame through the barycenter."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float)
        if w.sum() <= 0:
            w = np.ones(len(pts))
        bary = (w[:, None] * pts).sum(axis=0) / w.sum()
        rel = pts - bary
        cov = (rel * w[:, None]).T @ rel
        vals, vecs = np.linalg.eigh(cov)
        frame = vecs[:, ::-1][:, :d].T
        # Deterministic sign convention: first nonzero entry positive.
        frame = frame.copy()
        for i, row in enumerate(frame):
            nz = np.nonzero(np.abs(row) > 1e-14)[0]
            if len(nz) and row[nz[0]] < 0:
                frame[i] = -row
        return Plane(bary, frame)


def _orthonormalize(rows: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(rows.T)
    q = q.T[: rows.shape[0]]
    for i, row in enumerate(q):
        if np.dot(row, rows[i]) < 0:
            q[i] = -row
    return q


def normal_frame(plane: Plane) -> np.ndarray:
    """Orthonormal basis of the plane's normal space, shape (n-d, n)."""
    n, d = plane.n, plane.d
    full = np.vstack([plane.frame, np.eye(n)])
    q, _ = np.linalg.qr(full.T)
    return q.T[d:n]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud in R^n representing a d-dimensional measure."""

    points: np.ndarray
    weights: np.ndarray
    d: int
    label: str = ""
    _spacing: float = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0]:
            raise DimensionMismatchError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if np.any(w < 0):
            raise NegativeWeightError("carrier weights must be nonnegative")
        if not (1 <= self.d <= pts.shape[1]):
            raise DimensionMismatchError(
                f"intrinsic dim {self.d} outside [1, {pts.shape[1]}]"
            )
        pts, w = _merge_duplicates(pts, w)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def diameter(self) -> float:
        if self.size < 2:
            return 0.0
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        # Bounding-box diagonal over-estimates; refine with hull extremes.
        return float(np.linalg.norm(hi - lo))

    def median_spacing(self) -> float:
        """Median nearest-neighbor distance; 0 for a single point."""
        if self._spacing is not None:
            return self._spacing
        if self.size < 2:
            val = 0.0
        else:
            tree = cKDTree(self.points)
            dist, _ = tree.query(self.points, k=2)
            val = float(np.median(dist[:, 1]))
        object.__setattr__(self, "_spacing", val)
        return val

    def resolution(self) -> float:
        """Smallest radius this discretization can emulate (4x spacing)."""
        return 4.0 * self.median_spacing()

    def check_radius(self, r: float):
        if r < self.resolution():
            raise ResolutionError(
                f"radius {r:g} below resolution {self.resolution():g}"
            )

    def tree(self) -> cKDTree:
        return cKDTree(self.points)


def _merge_duplicates(pts: np.ndarray, w: np.ndarray):
    """Merge points equal within MERGE_TOL, summing weights.

    Keeps the first occurrence order.
    """
    if len(pts) == 0:
        return pts, w
    keys = {}
    keep = []
    acc = w.copy()
    scale = max(1.0, float(np.max(np.abs(pts))))
    decimals = max(0, 12 - int(math.floor(math.log10(scale))) if scale > 0 else 12)
    rounded = np.round(pts, decimals)
    for i, row in enumerate(rounded):
        key = tuple(row)
        if key in keys:
            acc[keys[key]] += w[i]
        else:
            keys[key] = i
            keep.append(i)
    if len(keep) == len(pts):
        return pts, w
    keep = np.array(keep)
    return pts[keep], acc[keep]


@dataclass(frozen=True)
class WeightedFunction:
    """Real values attached to the points of a carrier measure."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=float)
        )

    def check_carrier(self, mu: DiscreteMeasure):
        if len(self.values) != mu.size:
            raise DimensionMismatchError(
                f"{len(self.values)} values for {mu.size} points"
            )


# ---------------------------------------------------------------------------
# I/O


def load_point_cloud(path) -> tuple[DiscreteMeasure, WeightedFunction]:
    """Read a point cloud from CSV or JSON.

    CSV header is ``x1,...,xn,w,f`` (f optional, defaults 0); lines
    starting with ``#`` are comments.  The JSON mirror has fields
    ``points``, ``weights``, ``values``, ``n``, ``d``.
    """
    text = open(path, "r", encoding="utf-8").read()
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        return _load_json(text)
    return _load_csv(text)


def _load_json(text: str):
    try:
        obj = json.loads(text)
        pts = np.asarray(obj["points"], dtype=float)
        w = np.asarray(obj["weights"], dtype=float)
        n = int(obj.get("n", pts.shape[1] if pts.ndim == 2 else 1))
        d = int(obj.get("d", 1))
        values = obj.get("values")
        if values is not None:
            values = np.asarray(values, dtype=float)
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed JSON point cloud: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] != n:
        raise DimensionMismatchError("points array does not match declared n")
    mu = DiscreteMeasure(pts, w, d=d)
    f = _merge_values(pts, values, mu) if values is not None else None
    return mu, f


def _load_csv(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("empty point-cloud file")
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader)
    cols = [c.strip() for c in header]
    coord_cols = [c for c in cols if c.startswith("x")]
    n = len(coord_cols)
    if n == 0 or "w" not in cols:
        raise ParseError(f"bad header {cols}; expected x1,...,xn,w[,f]")
    has_f = "f" in cols
    expected = n + 1 + (1 if has_f else 0)
    pts, ws, vals = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != expected:
            raise ParseError(
                f"line {lineno}: {len(row)} fields, expected {expected}"
            )
        try:
            nums = [float(v) for v in row]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        pts.append(nums[:n])
        ws.append(nums[n])
        vals.append(nums[n + 1] if has_f else 0.0)
    pts = np.asarray(pts)
    mu = DiscreteMeasure(pts, np.asarray(ws), d=min(1, n) if n == 1 else max(1, n - 1))
    # d is not encoded in CSV; default to n-1 (graph-like), callers may rebuild.
    f = _merge_values(pts, np.asarray(vals), mu)
    return mu, f


def _merge_values(raw_pts, raw_vals, mu: DiscreteMeasure) -> WeightedFunction:
    """Carry f values through duplicate merging (weight-averaged)."""
    if len(raw_pts) == mu.size:
        return WeightedFunction(raw_vals)
    tree = cKDTree(mu.points)
    _, idx = tree.query(raw_pts)
    num = np.zeros(mu.size)
    den = np.zeros(mu.size)
    for i, j in enumerate(idx):
        num[j] += raw_vals[i]
        den[j] += 1.0
    return WeightedFunction(num / np.maximum(den, 1.0))


def save_point_cloud(path, mu: DiscreteMeasure, f: WeightedFunction | None = None):
    """Write the CSV format documented in :func:`load_point_cloud`."""
    values = f.values if f is not None else np.zeros(mu.size)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i+1}" for i in range(mu.n)] + ["w", "f"])
        for p, w, v in zip(mu.points, mu.weights, values):
            writer.writerow([f"{c:.17g}" for c in p] + [f"{w:.17g}", f"{v:.17g}"])


# ---------------------------------------------------------------------------
# Basic operations


def restrict(mu: DiscreteMeasure, ball: Ball) -> DiscreteMeasure:
    """Points strictly inside the open ball, weights unchanged."""
    mask = ball.contains(mu.points)
    return DiscreteMeasure(
        mu.points[mask], mu.weights[mask], d=mu.d, label=mu.label
    )


def restrict_indices(mu: DiscreteMeasure, ball: Ball) -> np.ndarray:
    return np.nonzero(ball.contains(mu.points))[0]


def average(f: WeightedFunction, mu: DiscreteMeasure, ball: Ball) -> float:
    """Weighted mean of f over the open ball."""
    f.check_carrier(mu)
    mask = ball.contains(mu.points)
    m = float(mu.weights[mask].sum())
    if m <= 0:
        raise EmptyBallError(f"sigma({ball}) = 0")
    return float((f.values[mask] * mu.weights[mask]).sum() / m)


def abs_average(f: WeightedFunction, mu: DiscreteMeasure, ball: Ball) -> float:
    """|f| averaged over the ball; the |f|_B of ball-normalized estimates."""
    return average(WeightedFunction(np.abs(f.values)), mu, ball)


@dataclass
class RegularityReport:
    min_ratio: float
    max_ratio: float
    implied_A: float
    regular: bool
    samples: int


def ahlfors_profile(
    mu: DiscreteMeasure,
    radii,
    sample_centers: int = 64,
    seed: int = 0,
    regular_threshold: float = 10.0,
) -> RegularityReport:
    """Sample sigma(B(x,r))/r^d over centers and radii.

    The implied regularity constant is A = max(max_ratio, 1/min_ratio).
    """
    radii = np.asarray(radii, dtype=float)
    if mu.size > 1:
        for r in radii:
            mu.check_radius(float(r))
    rng = np.random.default_rng(seed)
    k = min(sample_centers, mu.size)
    centers = rng.choice(mu.size, size=k, replace=False)
    tree = mu.tree()
    ratios = []
    for ci in centers:
        x = mu.points[ci]
        for r in radii:
            idx = tree.query_ball_point(x, r)
            inside = [i for i in idx if np.linalg.norm(mu.points[i] - x) < r]
            m = float(mu.weights[inside].sum())
            ratios.append(m / r ** mu.d)
    ratios = np.asarray(ratios)
    lo, hi = float(ratios.min()), float(ratios.max())
    a = max(hi, 1.0 / lo) if lo > 0 else math.inf
    return RegularityReport(lo, hi, a, a <= regular_threshold, len(ratios))


def discretize_plane_measure(
    plane: Plane, ball: Ball, c: float, step: float
) -> DiscreteMeasure:
    """Regular grid quadrature of c * H^d on plane ∩ 1.1*ball.

    Nodes are anchored at the projection of the ball center so the
    construction is deterministic given (plane, ball, step).
    """
    if step <= 0:
        raise DegenerateQuadratureError("step must be positive")
    if step > ball.radius:
        raise DegenerateQuadratureError(
            f"step {step:g} exceeds ball radius {ball.radius:g}"
        )
    if c < 0:
        raise ValueError("c must be nonnegative; sign belongs to the objective")
    coords = plane_grid_coords(plane, ball, step)
    anchor = plane.project_coords(ball.center)[0]
    pts = plane.embed(anchor + coords)
    w = np.full(len(pts), c * step ** plane.d)
    return DiscreteMeasure(pts, w, d=plane.d, label="plane-quadrature")


def plane_grid_coords(plane: Plane, ball: Ball, step: float) -> np.ndarray:
    """Grid offsets (in plane coordinates) covering 1.1 * ball."""
    reach = 1.1 * ball.radius
    kmax = int(math.floor(reach / step + 1e-9))
    axes = [np.arange(-kmax, kmax + 1) * step for _ in range(plane.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.linalg.norm(coords, axis=1) <= reach + 1e-9
    return coords[keep]


def extend_with_plane(
    sigma: DiscreteMeasure,
    f: WeightedFunction,
    r_out: float = 64.0,
    step: float = 0.25,
    alpha_opts=None,
):
    """Extend a bounded measure by its best-plane quadrature outside 4B.

    Requires supp(sigma) inside the unit ball with diameter ≤ 1 (the
    caller normalizes).  Returns the extended measure and f extended
    by zero.
    """
    f.check_carrier(sigma)
    norms = np.linalg.norm(sigma.points, axis=1)
    if norms.max() > 1 + 1e-9 or sigma.diameter > 1 + 1e-9:
        raise PreconditionError(
            "normalize input: diam(supp sigma) <= 1 and supp in B(0,1)"
        )
    from .alpha import alpha_number  # deferred: alpha depends on measures

    unit = Ball(np.zeros(sigma.n), 1.0)
    res = alpha_number(sigma, unit, alpha_opts)
    plane, c = res.plane_star, max(res.c_star, 0.0)
    big = Ball(np.zeros(sigma.n), r_out / 1.1)
    coords = plane_grid_coords(plane, big, step)
    anchor = plane.project_coords(big.center)[0]
    pts = plane.embed(anchor + coords)
    keep = np.linalg.norm(pts, axis=1) >= 4.0
    pts = pts[keep]
    w = np.full(len(pts), c * step ** plane.d)
    mu = DiscreteMeasure(
        np.vstack([sigma.points, pts]),
        np.concatenate([sigma.weights, w]),
        d=sigma.d,
        label=sigma.label + "+plane-tail",
    )
    f_ext = WeightedFunction(
        np.concatenate([f.values, np.zeros(len(pts))])
    )
    return mu, f_ext
