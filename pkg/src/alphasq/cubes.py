"""Dyadic-style cube systems on a point cloud.

A system is a tree of "cubes" (subsets of the support).  A single greedy
farthest-point traversal of the whole support yields nested nets: the
level-k net is the prefix of the traversal whose insertion radii exceed
delta^k times the root scale.  Every level-(k+1) net center points to
its nearest level-k net center as parent (a center is its own parent
while it stays in the coarser net), and a point belongs at level k to
the cube of its center chain's level-k ancestor.  Nesting and per-level
partitioning are then exact by construction, and subdivision continues
until every leaf is a single point, so martingale expansions over the
tree are exact.

Side length of a level-k cube is delta^k times the root scale (the
diameter of the support).  The classical ball sandwich
B(z_Q, l/5) cap supp subset Q subset B(z_Q, 3 l) is checked
empirically after construction rather than assumed.

Several independently-seeded systems form an "adjacent family": for an
arbitrary ball one of the systems contains a cube of comparable side
length containing the ball's points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, NoQualifyingCubeError, PreconditionError
from .measures import Ball, DiscreteMeasure


@dataclass
class Cube:
    id: int
    level: int
    center: int  # index into sigma.points
    members: np.ndarray  # sorted point indices
    parent: int | None
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


def _fps_traversal(points, root):
    """Full greedy farthest-point traversal.  Returns (order, radii):
    `order[i]` is the i-th point added and `radii[i]` its distance to the
    net of the first i points (radii are non-increasing; the root gets
    infinity).  Ties break to the lowest point index."""
    n = len(points)
    order = np.empty(n, dtype=np.int64)
    radii = np.empty(n)
    order[0] = root
    radii[0] = math.inf
    dist = np.linalg.norm(points - points[root], axis=1)
    for i in range(1, n):
        far = float(dist.max())
        cand = np.nonzero(dist >= far - 1e-12)[0]
        pick = int(cand.min())
        order[i] = pick
        radii[i] = far
        np.minimum(
            dist, np.linalg.norm(points - points[pick], axis=1), out=dist
        )
    return order, radii


@dataclass
class ContainmentReport:
    n_cubes: int
    inner_violations: int
    outer_violations: int
    max_outer_ratio: float
    min_inner_margin: float

    @property
    def ok(self) -> bool:
        return self.inner_violations == 0 and self.outer_violations == 0


@dataclass
class ThinBoundaryReport:
    level: int
    thresholds: np.ndarray
    fractions: np.ndarray
    gamma_hat: float


class CubeSystem:
    """One tree of cubes over a discrete measure."""

    def __init__(self, sigma: DiscreteMeasure, delta: float = 0.5, seed: int = 0):
        if not 0 < delta < 1:
            raise PreconditionError("delta must lie in (0, 1)")
        self.sigma = sigma
        self.delta = float(delta)
        self.seed = int(seed)
        self.root_scale = sigma.diameter if sigma.diameter > 0 else 1.0
        self.cubes: list[Cube] = []
        self.levels: dict[int, list[int]] = {}
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        from scipy.spatial import cKDTree

        pts = self.sigma.points
        n = self.sigma.size
        rng = np.random.default_rng(self.seed)
        if self.seed == 0:
            bary = (self.sigma.weights[:, None] * pts).sum(0) / self.sigma.mass
            root_center = int(np.argmin(np.linalg.norm(pts - bary, axis=1)))
        else:
            root_center = int(rng.integers(n))
        if n == 1:
            self.cubes = [Cube(0, 0, 0, np.array([0]), None)]
            self.levels = {0: [0]}
            self.point_cube = np.zeros((1, 1), dtype=np.int64)
            self.depth = 0
            return
        # One farthest-point traversal yields nested nets: the level-k net
        # is the traversal prefix with insertion radius > delta^k * scale.
        # Centers of every cube come from these nets, so same-level centers
        # are pairwise more than sep apart and the sep/5 repair balls below
        # are disjoint: the repaired inner-ball property cannot conflict.
        order, radii = _fps_traversal(pts, root_center)
        L = 1
        r_min = float(radii[-1])
        while self.delta ** L * self.root_scale >= r_min:
            L += 1
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n)
        tables = [np.zeros(n, dtype=np.int64)]
        self.cubes = [Cube(0, 0, root_center, np.arange(n), None)]
        self.levels = {0: [0]}
        tree = self.sigma.tree()
        active = [0]
        k = 0
        while active and k < L:
            k += 1
            sep = self.delta ** k * self.root_scale
            m = max(int(np.searchsorted(-radii, -sep)), 1)  # radii > sep
            net_k = order[:m]
            label_prev = tables[-1]
            label = label_prev.copy()
            # net centers grouped by the parent cube that owns them
            owned: dict[int, list[int]] = {}
            for c in net_k:
                owned.setdefault(int(label_prev[c]), []).append(int(c))
            created = []
            for qid in active:
                q = self.cubes[qid]
                mem = q.members
                own = [q.center] + sorted(
                    (c for c in owned.get(qid, []) if c != q.center),
                    key=lambda c: int(rank[c]),
                )
                d = np.linalg.norm(
                    pts[mem][:, None, :] - pts[own][None, :, :], axis=2
                )
                assign = np.argmin(d, axis=1)
                for ci, c in enumerate(own):
                    cell = mem[assign == ci]
                    if len(cell) == 0:
                        continue
                    cube = Cube(len(self.cubes), k, int(c), None, qid)
                    self.cubes.append(cube)
                    q.children.append(cube.id)
                    created.append(cube.id)
                    label[cell] = cube.id
            # repair pass: pull every point within sep/5 of a created center
            # into that center's cube, fixing the ancestor chain; the balls
            # are disjoint so the pulls never compete
            for cid in created:
                cube = self.cubes[cid]
                for x in tree.query_ball_point(pts[cube.center], sep / 5.0):
                    if label[x] == cid:
                        continue
                    label[x] = cid
                    anc = cube
                    for j in range(k - 1, -1, -1):
                        pid = anc.parent
                        if tables[j][x] == pid:
                            break
                        tables[j][x] = pid
                        anc = self.cubes[pid]
            for cid in created:
                self.cubes[cid].members = np.nonzero(label == cid)[0]
            tables.append(label)
            self.levels[k] = created
            active = [cid for cid in created
                      if len(self.cubes[cid].members) > 1]
        self.point_cube = np.stack(tables)
        self.depth = len(tables) - 1
        for cube in self.cubes:
            cube.members = np.nonzero(
                self.point_cube[cube.level] == cube.id
            )[0]
        # repair pulls can empty a cube; remove such cubes entirely and
        # renumber so every id in the tree names a nonempty cube
        empty = {c.id for c in self.cubes if len(c.members) == 0}
        if empty:
            remap = {}
            kept = []
            for cube in self.cubes:
                if cube.id in empty:
                    continue
                remap[cube.id] = len(kept)
                kept.append(cube)
            for cube in kept:
                cube.id = remap[cube.id]
                cube.parent = (
                    remap[cube.parent] if cube.parent is not None else None
                )
                cube.children = [
                    remap[c] for c in cube.children if c not in empty
                ]
            self.cubes = kept
            lut = np.arange(self.point_cube.max() + 1)
            for old, new in remap.items():
                lut[old] = new
            self.point_cube = lut[self.point_cube]
            for k in list(self.levels):
                self.levels[k] = [
                    remap[c] for c in self.levels[k] if c not in empty
                ]

    # -- accessors ---------------------------------------------------------

    def cube(self, cid: int) -> Cube:
        return self.cubes[cid]

    @property
    def root(self) -> Cube:
        return self.cubes[0]

    def side(self, cid: int) -> float:
        return self.delta ** self.cubes[cid].level * self.root_scale

    def center_point(self, cid: int) -> np.ndarray:
        return self.sigma.points[self.cubes[cid].center]

    def ball_of(self, cid: int) -> Ball:
        """The alpha evaluation ball B_Q = B(z_Q, 4 l(Q))."""
        return Ball(self.center_point(cid), 4.0 * self.side(cid))

    def mass_of(self, cid: int) -> float:
        return float(self.sigma.weights[self.cubes[cid].members].sum())

    def average_on(self, cid: int, values: np.ndarray) -> float:
        mem = self.cubes[cid].members
        w = self.sigma.weights[mem]
        return float(np.dot(w, values[mem]) / w.sum())

    def ids_in_range(self, scale_range=None):
        if scale_range is None:
            return list(range(len(self.cubes)))
        kmin, kmax = scale_range
        return [c.id for c in self.cubes if kmin <= c.level <= kmax]

    def cube_at(self, point_index: int, level: int) -> int:
        k = min(level, self.depth)
        return int(self.point_cube[k, point_index])

    def ancestors(self, cid: int):
        out = []
        cur = self.cubes[cid]
        while cur.parent is not None:
            cur = self.cubes[cur.parent]
            out.append(cur.id)
        return out

    # -- diagnostics -------------------------------------------------------

    def containment_stats(self) -> ContainmentReport:
        """Empirical check of the ball sandwich for every cube."""
        pts = self.sigma.points
        tree = self.sigma.tree()
        inner_bad = 0
        outer_bad = 0
        max_ratio = 0.0
        min_margin = math.inf
        for q in self.cubes:
            ell = self.side(q.id)
            z = pts[q.center]
            labels = self.point_cube[q.level]
            near = np.asarray(tree.query_ball_point(z, ell / 5.0), dtype=np.int64)
            if np.any(labels[near] != q.id):
                inner_bad += 1
            else:
                kq = min(len(pts), 64)
                nd, ni = tree.query(z, k=kq)
                foreign = labels[ni] != q.id
                if np.any(foreign):
                    min_margin = min(min_margin, float(nd[foreign].min()) / ell)
            reach = float(
                np.linalg.norm(pts[q.members] - z, axis=1).max()
            ) / ell
            max_ratio = max(max_ratio, reach)
            if reach > 3.0:
                outer_bad += 1
        return ContainmentReport(
            len(self.cubes), inner_bad, outer_bad, max_ratio,
            min_margin if min_margin < math.inf else 0.0,
        )

    def thin_boundary_stats(self, level: int, thresholds=None) -> ThinBoundaryReport:
        """Mass fraction within t*l(Q) of a same-level cube boundary, with a
        log-log slope estimate gamma_hat."""
        if thresholds is None:
            thresholds = np.geomspace(1e-3, 1.0, 13)
        thresholds = np.asarray(thresholds, dtype=float)
        ids = self.levels.get(level)
        if not ids:
            raise PreconditionError(f"no cubes at level {level}")
        pts = self.sigma.points
        w = self.sigma.weights
        labels = self.point_cube[min(level, self.depth)]
        ell = self.delta ** level * self.root_scale
        tau = np.full(self.sigma.size, np.inf)
        from scipy.spatial import cKDTree

        for cid in set(labels):
            mem = np.nonzero(labels == cid)[0]
            other = np.nonzero(labels != cid)[0]
            if len(other) == 0:
                continue
            tree = cKDTree(pts[other])
            tau[mem] = tree.query(pts[mem])[0] / ell
        total = w.sum()
        fracs = np.array([w[tau <= t].sum() / total for t in thresholds])
        mask = (fracs > 0) & (fracs < 1)
        if mask.sum() >= 2:
            slope = np.polyfit(np.log(thresholds[mask]), np.log(fracs[mask]), 1)[0]
        else:
            slope = float("nan")
        return ThinBoundaryReport(level, thresholds, fracs, float(slope))


def build_system(sigma: DiscreteMeasure, delta: float = 0.5, seed: int = 0):
    return CubeSystem(sigma, delta=delta, seed=seed)


# ---------------------------------------------------------------------------
# Adjacent families


@dataclass
class CoverageReport:
    n_queries: int
    n_covered: int
    n_systems: int

    @property
    def fraction(self) -> float:
        return self.n_covered / self.n_queries if self.n_queries else 1.0


class AdjacentFamily:
    """Independently-seeded cube systems with a comparable-cube lookup.

    R_of(ball) returns (omega, cube_id): the lowest-index system owning a
    cube that contains ball cap supp with side length at most
    k_adj * radius.
    """

    def __init__(self, sigma: DiscreteMeasure, delta: float = 0.5,
                 n_systems: int = 8, seed: int = 0, k_adj: float | None = None):
        self.sigma = sigma
        self.delta = float(delta)
        self.k_adj = (8.0 / delta) if k_adj is None else float(k_adj)
        self.systems = [
            CubeSystem(sigma, delta=delta, seed=seed + 101 * w)
            for w in range(n_systems)
        ]
        self._good_cache: dict = {}

    def R_of(self, ball: Ball):
        inside = np.nonzero(ball.contains(self.sigma.points))[0]
        if len(inside) == 0:
            raise NoQualifyingCubeError("ball contains no support points")
        max_side = self.k_adj * ball.radius
        for omega, sys in enumerate(self.systems):
            # smallest k with delta^k * root_scale <= max_side
            if max_side >= sys.root_scale:
                k_need = 0
            else:
                k_need = int(
                    math.ceil(
                        math.log(max_side / sys.root_scale) / math.log(sys.delta)
                        - 1e-12
                    )
                )
            labels = sys.point_cube[min(k_need, sys.depth), inside]
            if np.all(labels == labels[0]):
                cid = int(labels[0])
                cube = sys.cube(cid)
                # a singleton persists conceptually through deeper levels
                if cube.level >= k_need or len(cube.members) == 1:
                    return omega, cid
        raise NoQualifyingCubeError(
            f"no cube of side <= {max_side:.3g} covers the ball in "
            f"{len(self.systems)} systems"
        )

    def good_cubes(self, base: CubeSystem, omega: int, scale_range=None):
        """Ids of cubes in `base` whose comparable cube lives in system
        `omega` of this family (cached)."""
        key = (id(base), omega, scale_range)
        if key not in self._good_cache:
            buckets: dict[int, list[int]] = {w: [] for w in range(len(self.systems))}
            for cid in base.ids_in_range(scale_range):
                try:
                    w, _ = self.R_of(base.ball_of(cid))
                except NoQualifyingCubeError:
                    continue
                buckets[w].append(cid)
            for w, ids in buckets.items():
                self._good_cache[(id(base), w, scale_range)] = ids
        return self._good_cache[key]

    def validate(self, n_queries: int = 1000, seed: int = 7) -> CoverageReport:
        rng = np.random.default_rng(seed)
        pts = self.sigma.points
        rmin = self.sigma.resolution()
        rmax = max(self.sigma.diameter / 4.0, rmin * 1.01)
        covered = 0
        for _ in range(n_queries):
            center = pts[rng.integers(len(pts))] + rng.normal(
                scale=0.1 * rmin, size=pts.shape[1]
            )
            r = math.exp(rng.uniform(math.log(rmin), math.log(rmax)))
            try:
                self.R_of(Ball(center, r))
                covered += 1
            except NoQualifyingCubeError:
                pass
        return CoverageReport(n_queries, covered, len(self.systems))


def build_adjacent_family(
    sigma: DiscreteMeasure, delta: float = 0.5, seed: int = 0,
    n_queries: int = 1000,
) -> AdjacentFamily:
    """Build a family, escalating 8 -> 16 systems until the seeded
    validation queries are fully covered."""
    for n_systems in (8, 16):
        fam = AdjacentFamily(sigma, delta=delta, n_systems=n_systems, seed=seed)
        report = fam.validate(n_queries=n_queries, seed=seed + 7)
        fam.coverage = report
        if report.fraction == 1.0:
            return fam
    raise CoverageError(
        f"coverage {report.fraction:.4f} < 1 with {report.n_systems} systems"
    )
