"""Brute-force oracle, instance generators, property suites and benchmarks."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .avd import FINAL_LEAF, AvdDag, BuildConfig, build
from .capsules import (
    bounding_volumes,
    build_capsule,
    mc_volume,
    sample_boundary,
    sample_interior,
    shrunken_intersection_witness,
)
from .config import GeneratorError, UsageError, expansion_factor, lfs_expansion_factor
from .ellipsoids import Ellipsoid, ellipsoids_disjoint
from .geometry import SegmentSet, _pairwise_segment_distances, nearest_two
from .tensors import hessian_line, local_tensor, sample_ellipsoid_boundary, tensor_stack

# -- oracle -----------------------------------------------------------------


def brute_force_nn(S: SegmentSet, q) -> tuple[int, float]:
    """Exact nearest segment by linear scan; ties go to the lowest id."""
    d = S.distances(q)
    k = int(np.argmin(d))
    return k, float(d[k])


# -- generators --------------------------------------------------------------


def gen_random(
    n: int,
    d: int,
    seed: int,
    min_gap: float,
    max_length: float | None = None,
    spread_band: tuple[float, float] | None = None,
    max_rejections: int = 10**6,
) -> SegmentSet:
    """Segments in the unit cube, added one by one until all gaps are >= ``min_gap``.

    Lengths are uniform in ``[max_length / 4, max_length]`` (default
    ``min(0.5, 2 n^(-1/d))``). With ``spread_band`` the whole instance is
    redrawn until its spread falls inside the band.
    """
    if n < 1 or d < 2:
        raise UsageError("need n >= 1 and d >= 2")
    if not min_gap > 0:
        raise UsageError("min_gap must be positive")
    if n >= 2 and min_gap >= math.sqrt(d):
        raise GeneratorError(f"min_gap {min_gap} exceeds the cube diameter; no two segments fit")
    lmax = max_length if max_length is not None else min(0.5, 2.0 * n ** (-1.0 / d))
    rng = np.random.default_rng(seed)
    rejections = 0
    while True:
        A = np.zeros((n, d))
        B = np.zeros((n, d))
        k = 0
        while k < n:
            a = rng.uniform(0.0, 1.0, d)
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            b = a + u * rng.uniform(0.25 * lmax, lmax)
            ok = bool(((b >= 0.0) & (b <= 1.0)).all())
            if ok and k:
                A[k], B[k] = a, b
                gaps = _pairwise_segment_distances(A[: k + 1], B[: k + 1], np.arange(k), np.full(k, k))
                ok = bool(gaps.min() >= min_gap)
            if ok:
                A[k], B[k] = a, b
                k += 1
                continue
            rejections += 1
            if rejections > max_rejections:
                raise GeneratorError(f"gave up after {max_rejections} rejections (n={n}, min_gap={min_gap})")
        S = SegmentSet(A, B)
        if spread_band is None or S.n < 2 or spread_band[0] <= S.spread <= spread_band[1]:
            return S
        rejections += 1
        if rejections > max_rejections:
            raise GeneratorError(f"no instance with spread in {spread_band} after {max_rejections} tries")


def griddle_delta_bound(eps: float) -> float:
    """Heights must stay strictly below this for the construction to work."""
    return 1.0 / (2.0 * (1.0 + eps))


@dataclass
class GriddleInstance:
    n: int
    eps: float
    delta: float
    segments: SegmentSet
    verticals: list  # ids of v_0 .. v_n
    horizontals: list  # ids of h_0 .. h_n
    query_points: np.ndarray  # (n+1, 2n+1, 3): points (i, j/2, delta)

    def odd_points(self) -> list[tuple[int, np.ndarray]]:
        """``(i, q)`` for the points between consecutive horizontals above v_i."""
        return [(i, self.query_points[i, j]) for i in range(self.n + 1) for j in range(1, 2 * self.n, 2)]


def gen_griddle(n: int, eps: float, delta: float | None = None) -> GriddleInstance:
    """Vertical segments in the plane z=0 under horizontal ones at height delta."""
    if n < 1:
        raise UsageError("n must be at least 1")
    if not eps > 0:
        raise UsageError("epsilon must be positive")
    bound = griddle_delta_bound(eps)
    if delta is None:
        delta = 0.8 * bound
    if not 0 < delta < bound:
        raise UsageError(f"delta must lie in (0, {bound:.6g}) for epsilon={eps}")
    A, B = [], []
    for i in range(n + 1):
        A.append([i, 0.0, 0.0])
        B.append([i, float(n), 0.0])
    for j in range(n + 1):
        A.append([0.0, j, delta])
        B.append([float(n), j, delta])
    S = SegmentSet(np.array(A, dtype=float), np.array(B, dtype=float))
    I, J = np.meshgrid(np.arange(n + 1), np.arange(2 * n + 1), indexing="ij")
    Q = np.stack([I.astype(float), J / 2.0, np.full(I.shape, delta)], axis=-1)
    return GriddleInstance(n, float(eps), float(delta), S, list(range(n + 1)), list(range(n + 1, 2 * n + 2)), Q)


@dataclass
class GriddleReport:
    points: int
    failures: list
    witness_count: int
    min_other_distance: float
    min_other_ratio: float

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_griddle(G: GriddleInstance, tol: float = 1e-12) -> GriddleReport:
    """Check that every odd point has its vertical as the only valid answer."""
    S = G.segments
    failures = []
    min_other = math.inf
    min_ratio = math.inf
    for i, q in G.odd_points():
        d = S.distances(q)
        own = d[G.verticals[i]]
        others = np.delete(d, G.verticals[i])
        min_other = min(min_other, float(others.min()))
        ratio = float(others.min()) / own
        min_ratio = min(min_ratio, ratio)
        if abs(own - G.delta) > tol:
            failures.append((i, q.tolist(), "distance to own vertical is not delta"))
        elif others.min() < 0.5 - tol:
            failures.append((i, q.tolist(), "another segment is closer than 1/2"))
        elif not ratio - 1.0 > G.eps:
            failures.append((i, q.tolist(), "another segment is a valid answer"))
        elif brute_force_nn(S, q)[0] != G.verticals[i]:
            failures.append((i, q.tolist(), "oracle disagrees"))
    pts = len(G.odd_points())
    return GriddleReport(pts, failures, pts - len(failures), min_other, min_ratio)


def two_parallel() -> SegmentSet:
    """The segments y=0 and y=2 over x in [0, 10]."""
    return SegmentSet(np.array([[0.0, 0.0], [0.0, 2.0]]), np.array([[10.0, 0.0], [10.0, 2.0]]))


# -- validation suites -------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    violations: int = 0
    max_violation: float = 0.0
    seed: int = 0
    skipped: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.checks > 0

    def record(self, excess: np.ndarray):
        """Count checks; positive entries of ``excess`` are violations."""
        excess = np.asarray(excess, dtype=float).ravel()
        self.checks += excess.size
        bad = excess > 0
        self.violations += int(bad.sum())
        if excess.size:
            self.max_violation = max(self.max_violation, float(excess.max(initial=0.0)))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["passed"] = self.passed
        return doc


@dataclass
class ValidationContext:
    seed: int = 0
    configs: int = 100
    samples: int = 1000
    pairs: int = 500
    eps: float = 0.5
    volume_samples: int = 10**6
    S: SegmentSet | None = None
    dag: AvdDag | None = None
    queries: int = 1000

    def rng(self, name: str) -> np.random.Generator:
        # each suite owns its stream, independent of which other suites run
        return np.random.default_rng([self.seed, sum(name.encode())])

    def instance(self, rng, n_min: int = 2) -> SegmentSet:
        if self.S is not None:
            return self.S
        d = int(rng.integers(2, 4))
        n = int(rng.integers(n_min, 7))
        return gen_random(n, d, int(rng.integers(2**31)), 0.02)

    def point(self, rng, S: SegmentSet) -> np.ndarray:
        lo, hi = S.endpoints().min(axis=0), S.endpoints().max(axis=0)
        pad = 0.5 * (hi - lo).max()
        while True:
            x = rng.uniform(lo - pad, hi + pad)
            if S.distances(x).min() > 1e-6:
                return x

    def structure(self) -> AvdDag:
        if self.dag is None:
            S = self.S if self.S is not None else two_parallel()
            self.dag = build(S, self.eps, BuildConfig(seed=self.seed))
        return self.dag


def _phi_many(S: SegmentSet, X: np.ndarray) -> np.ndarray:
    return np.sort(S.distances_many(X), axis=1)[:, 1]


def suite_lipschitz(ctx: ValidationContext) -> SuiteResult:
    res = SuiteResult("lipschitz", seed=ctx.seed)
    rng = ctx.rng(res.name)
    total = ctx.pairs * 20 if ctx.S is None else ctx.pairs * 20
    per = max(1, total // 10)
    for _ in range(max(1, total // per)):
        S = ctx.instance(rng)
        lo, hi = S.endpoints().min(axis=0) - 0.5, S.endpoints().max(axis=0) + 0.5
        X = rng.uniform(lo, hi, size=(per, S.dim))
        Y = np.where(
            (np.arange(per) % 2 == 0)[:, None], X + 0.05 * rng.standard_normal(X.shape), rng.uniform(lo, hi, size=X.shape)
        )
        excess = np.abs(_phi_many(S, X) - _phi_many(S, Y)) - np.linalg.norm(X - Y, axis=1) - 1e-9
        res.record(excess)
    return res


def _fd_hessian(f, x: np.ndarray, h: float) -> np.ndarray:
    d = len(x)
    E = np.eye(d) * h
    H = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            H[i, j] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * h * h)
    return H


def suite_tensor(ctx: ValidationContext) -> SuiteResult:
    res = SuiteResult("tensor", seed=ctx.seed)
    rng = ctx.rng(res.name)
    worst_angle = 0.0
    for _ in range(ctx.configs):
        S = ctx.instance(rng, n_min=1)
        x = ctx.point(rng, S)
        s = S.segment(int(rng.integers(S.n)))
        v = s.direction
        d_point = lambda y: 0.5 * float((y - s.a) @ (y - s.a))
        d_line = lambda y: 0.5 * float((y - s.a) @ (y - s.a) - ((y - s.a) @ v) ** 2)
        res.record(np.abs(_fd_hessian(d_point, x, 1e-5) - np.eye(S.dim)) - 1e-4)
        res.record(np.abs(_fd_hessian(d_line, x, 1e-5) - hessian_line(v)) - 1e-4)
        T = local_tensor(x, s)
        w, Q = np.linalg.eigh(T.matrix)
        expect = np.sort([T.eigen_small] + [T.eigen_large] * (S.dim - 1))
        res.record(np.abs(w - expect) / expect.max() - 1e-9)
        if T.eigen_large - T.eigen_small > 1e-6 * T.eigen_large:
            k = int(np.argmin(np.abs(w - T.eigen_small)))
            ang = math.acos(min(1.0, abs(float(Q[:, k] @ v))))
            worst_angle = max(worst_angle, ang)
            res.record([ang - 1e-6])
        res.record([1.0 - 1e-12 - T.eigen_large / T.eigen_small])  # anisotropy ratio >= 1
    res.notes["max_axis_angle"] = worst_angle
    return res


def _ellipsoid_bbox_half(H: np.ndarray) -> np.ndarray:
    """Half widths of ``{u : 1/2 u^T H u <= 1}``."""
    return np.sqrt(2.0 * np.diag(np.linalg.inv(H)))


def suite_metric_cell(ctx: ValidationContext) -> SuiteResult:
    """The blended-tensor ellipsoid sits inside the cell, which sits inside its sqrt(n) scaling."""
    res = SuiteResult("lemma1", seed=ctx.seed)
    rng = ctx.rng(res.name)
    for _ in range(ctx.configs):
        S = ctx.instance(rng, n_min=1)
        x = ctx.point(rng, S)
        Hs = tensor_stack(x, S)
        Ht = Hs.sum(axis=0)
        U = sample_ellipsoid_boundary(Ht, ctx.samples, rng)
        forms = 0.5 * np.einsum("mi,nij,mj->mn", U, Hs, U)
        res.record(forms.max(axis=1) - 1.0 - 1e-9)
        half = np.min([_ellipsoid_bbox_half(H) for H in Hs], axis=0)
        got = []
        for _ in range(200):
            V = rng.uniform(-half, half, size=(4 * ctx.samples, S.dim))
            inside = (0.5 * np.einsum("mi,nij,mj->mn", V, Hs, V) <= 1.0).all(axis=1)
            got.append(V[inside])
            if sum(len(g) for g in got) >= ctx.samples:
                break
        V = np.vstack(got)[: ctx.samples]
        if len(V) < ctx.samples:
            res.skipped += 1
        res.record(0.5 * np.einsum("mi,ij,mj->m", V, Ht, V) - S.n * (1.0 + 1e-9))
    return res


def suite_capsule_tensor(ctx: ValidationContext) -> SuiteResult:
    """Per-segment ellipsoid inside the per-segment capsule, capsule inside its sqrt(2) scaling."""
    res = SuiteResult("eq8", seed=ctx.seed)
    rng = ctx.rng(res.name)
    for _ in range(ctx.configs):
        S = ctx.instance(rng, n_min=1)
        x = ctx.point(rng, S)
        r = float(rng.uniform(0.0, 1.0)) * float(S.distances(x).min())
        i = int(rng.integers(S.n))
        Si = SegmentSet(S.A[i : i + 1], S.B[i : i + 1])
        C = build_capsule(Si, x, r)
        H = local_tensor(x, S.segment(i)).matrix
        U = sample_ellipsoid_boundary(H, ctx.samples, rng)
        res.record(C.gauge(x + U) - 1.0 - 1e-9)
        Z = sample_interior(C, ctx.samples, rng) - x
        res.record(0.5 * np.einsum("mi,ij,mj->m", Z, H, Z) - 2.0 * (1.0 + 1e-9))
    return res


def _pair_points(rng, S: SegmentSet, ctx: ValidationContext, r: float | None):
    x = ctx.point(rng, S)
    scale = r if r is not None else float(np.sort(S.distances(x))[1])
    y = x + rng.standard_normal(S.dim) * scale * rng.uniform(0.1, 1.5)
    while S.distances(y).min() <= 1e-6:
        y = x + rng.standard_normal(S.dim) * scale
    return x, y


def _expansion_suite(ctx: ValidationContext, name: str, lfs: bool) -> SuiteResult:
    res = SuiteResult(name, seed=ctx.seed)
    rng = ctx.rng(name)
    lam = 0.5
    factor = lfs_expansion_factor(lam) if lfs else expansion_factor(lam)
    witnessed = 0
    for _ in range(ctx.pairs):
        S = ctx.instance(rng)
        if lfs:
            x, y = _pair_points(rng, S, ctx, None)
            rx, ry = float(np.sort(S.distances(x))[1]), float(np.sort(S.distances(y))[1])
        else:
            r = float(rng.uniform(0.02, 0.5))
            x, y = _pair_points(rng, S, ctx, r)
            rx = ry = r
        Cx, Cy = build_capsule(S, x, rx), build_capsule(S, y, ry)
        if shrunken_intersection_witness(Cx, Cy, lam) is None:
            res.skipped += 1
            continue
        witnessed += 1
        Z = sample_boundary(Cy, ctx.samples, rng, lam)
        res.record(Cx.gauge(Z) / (factor * lam) - 1.0 - 1e-9)
    res.notes["witnessed_pairs"] = witnessed
    res.notes["factor"] = factor
    return res


def suite_expansion(ctx: ValidationContext) -> SuiteResult:
    return _expansion_suite(ctx, "lemma2", lfs=False)


def suite_expansion_lfs(ctx: ValidationContext) -> SuiteResult:
    return _expansion_suite(ctx, "lemma10", lfs=True)


def suite_passport(ctx: ValidationContext) -> SuiteResult:
    """Local feature size inside a shrunken LFS capsule stays within (1 +- lam)."""
    res = SuiteResult("lemma4", seed=ctx.seed)
    rng = ctx.rng(res.name)
    for k in range(ctx.configs):
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        lam = float(rng.uniform(0.05, 0.95))
        phi = float(np.sort(S.distances(x))[1])
        C = build_capsule(S, x, phi)
        Z = sample_interior(C, ctx.samples, rng, lam)
        ratio = _phi_many(S, Z) / phi
        res.record(np.maximum((1 - lam - 1e-9) - ratio, ratio - (1 + lam + 1e-9)))
    return res


def suite_representative(ctx: ValidationContext) -> SuiteResult:
    """The segment nearest the center is an eps-ANN on the eps/3 shrunken LFS capsule."""
    res = SuiteResult("cor6", seed=ctx.seed)
    rng = ctx.rng(res.name)
    for _ in range(ctx.configs):
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        eps = float(rng.choice([0.1, 0.25, 0.5, 1.0]))
        d = S.distances(x)
        sx = int(np.argmin(d))
        C = build_capsule(S, x, float(np.sort(d)[1]))
        Z = sample_interior(C, ctx.samples, rng, eps / 3.0)
        D = S.distances_many(Z)
        res.record(D[:, sx] - (1.0 + eps) * D.min(axis=1) - 1e-9)
    return res


def suite_radius_scaling(ctx: ValidationContext) -> SuiteResult:
    """Growing the radius is dominated by scaling; shrinking by scaling is dominated by the radius."""
    res = SuiteResult("lemma7", seed=ctx.seed)
    rng = ctx.rng(res.name)
    per = max(1, ctx.samples // 10)
    for _ in range(10 * max(1, ctx.configs // 10)):
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        r = float(rng.uniform(0.01, 1.0))
        gam = float(rng.uniform(1.0, 4.0))
        lam = float(rng.uniform(0.05, 1.0))
        C_r, C_gr, C_lr = build_capsule(S, x, r), build_capsule(S, x, gam * r), build_capsule(S, x, lam * r)
        # per constraint the thresholds obey the two inequalities exactly
        res.record(C_gr.thresholds - gam * C_r.thresholds - 1e-12 * C_gr.thresholds)
        res.record(lam * C_r.thresholds - C_lr.thresholds - 1e-12 * C_lr.thresholds)
        Z = sample_interior(C_gr, per, rng)
        res.record(C_r.gauge(x + (Z - x) / gam) - 1.0 - 1e-12)
        Z = sample_interior(C_r, per, rng, lam)
        res.record(C_lr.gauge(Z) - 1.0 - 1e-12)
    return res


def suite_volume_scaling(ctx: ValidationContext) -> SuiteResult:
    """Exact membership identity under central scaling, and Monte Carlo volume ratios."""
    res = SuiteResult("lemma8", seed=ctx.seed)
    rng = ctx.rng(res.name)
    for _ in range(10):
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        C = build_capsule(S, x, float(rng.uniform(0.01, 1.0)))
        lam = float(rng.uniform(0.1, 2.0))
        lo, hi = C.scaled_bbox(1.5 * max(lam, 1.0))
        Z = rng.uniform(lo, hi, size=(max(1, ctx.samples), S.dim))
        g_scaled = C.gauge(Z) / lam
        g_pulled = C.gauge(x + (Z - x) / lam)
        res.record(np.abs(g_scaled - g_pulled) - 1e-12 * np.maximum(1.0, g_pulled))
    m = ctx.volume_samples
    worst_half = 0.0
    worst_double = 0.0
    for k in range(2):
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        r = float(np.sort(S.distances(x))[min(1, S.n - 1)])
        C = build_capsule(S, x, r)
        box = C.scaled_bbox(1.0)
        full = mc_volume(lambda Z: C.contains(Z), box, m, int(rng.integers(2**31)))
        half = mc_volume(lambda Z: C.contains(Z, 0.5), C.scaled_bbox(0.5), m, int(rng.integers(2**31)))
        expect = full.volume * 0.5**S.dim
        se = math.hypot(half.stderr, full.stderr * 0.5**S.dim)
        z = abs(half.volume - expect) / se if se > 0 else 0.0
        worst_half = max(worst_half, z)
        res.record([z - 3.0])
        C2 = build_capsule(S, x, 2 * r)
        dbl = mc_volume(lambda Z: C2.contains(Z), C2.scaled_bbox(1.0), m, int(rng.integers(2**31)))
        se = math.hypot(dbl.stderr, full.stderr * 2**S.dim)
        z = (dbl.volume - 2**S.dim * full.volume) / se if se > 0 else 0.0
        worst_double = max(worst_double, z)
        res.record([z - 3.0])
    res.notes["half_scale_z"] = worst_half
    res.notes["double_radius_z"] = worst_double
    return res


def _bounding_config(rng, ctx: ValidationContext):
    """A point whose LFS capsule is a pseudo-cylinder for its nearest segment."""
    while True:
        S = ctx.instance(rng)
        x = ctx.point(rng, S)
        bv = bounding_volumes(S, x, float(np.sort(S.distances(x))[1]))
        if not bv.degenerate:
            return S, x, bv


def suite_bounding_volumes(ctx: ValidationContext) -> SuiteResult:
    """Double cone inside the LFS capsule inside the bounding cylinder; volume ratio <= 2(d+1)."""
    res = SuiteResult("sec5", seed=ctx.seed)
    rng = ctx.rng(res.name)
    cone_misses = 0
    cone_checks = 0
    worst_ratio = 0.0
    for k in range(ctx.configs):
        S, x, bv = _bounding_config(rng, ctx)
        C = build_capsule(S, x, float(np.sort(S.distances(x))[1]))
        Z = sample_interior(C, ctx.samples, rng)
        res.record((~bv.outer_contains(Z)).astype(float))
        # the cone side of the sandwich is recorded, not assumed
        lo, hi = bv.bbox()
        W = rng.uniform(lo, hi, size=(4 * ctx.samples, S.dim))
        W = W[bv.inner_contains(W)][: ctx.samples]
        cone_checks += len(W)
        cone_misses += int((~C.contains(W)).sum())
        worst_ratio = max(worst_ratio, bv.ratio)
    vols = []
    for k in range(2):
        S, x, bv = _bounding_config(rng, ctx)
        C = build_capsule(S, x, float(np.sort(S.distances(x))[1]))
        inner = mc_volume(bv.inner_contains, bv.bbox(), ctx.volume_samples, int(rng.integers(2**31)))
        cap = mc_volume(lambda Z: C.contains(Z), C.scaled_bbox(1.0), ctx.volume_samples, int(rng.integers(2**31)))
        bound = 2 * (S.dim + 1)
        # capsule-to-cone ratio within three standard errors of the bound
        excess = cap.volume - bound * inner.volume - 3 * math.hypot(cap.stderr, bound * inner.stderr)
        res.record([excess])
        vols.append(cap.volume / inner.volume if inner.volume else math.inf)
    res.notes["closed_form_ratio_max"] = worst_ratio
    res.notes["mc_capsule_to_cone"] = vols
    res.notes["cone_points_outside_capsule"] = cone_misses
    res.notes["cone_points_checked"] = cone_checks
    return res


def suite_packing(ctx: ValidationContext) -> SuiteResult:
    """Inner ellipsoids at one (level, exponent) are disjoint; neighbour counts obey the packing bound."""
    res = SuiteResult("packing", seed=ctx.seed)
    dag = ctx.structure()
    groups: dict = {}
    for nd in dag.nodes:
        if not nd.fill:
            groups.setdefault((nd.level, nd.refine_exponent), []).append(nd)
    for key, nodes in groups.items():
        C = np.array([nd.inner.center for nd in nodes])
        R = np.array([nd.inner.max_radius for nd in nodes])
        for a in range(len(nodes)):
            near = np.flatnonzero(np.linalg.norm(C[a + 1 :] - C[a], axis=1) <= R[a + 1 :] + R[a]) + a + 1
            bad = [not ellipsoids_disjoint(nodes[a].inner, nodes[b].inner) for b in near]
            res.record(np.array(bad, dtype=float))
            res.checks += len(nodes) - a - 1 - len(near)
    consts = dag.consts
    d = dag.dim
    rng = ctx.rng(res.name)
    worst = {}
    for beta in (1.0, 2.0, 4.0):
        bound = (consts.lam_outer * consts.alpha * beta / consts.lam_inner) ** d * 4**d
        most = 0
        level_nodes = [nd for nd in dag.nodes if nd.refine_exponent == 0]
        picks = rng.choice(len(level_nodes), size=min(50, len(level_nodes)), replace=False)
        for k in picks:
            nd = level_nodes[int(k)]
            probe = build_capsule(dag.source, nd.center, beta * nd.distance_param)
            ball = Ellipsoid.ball(nd.center, consts.lam_outer * probe.ball_radius)
            same = [o for o in level_nodes if o.level == nd.level]
            count = sum(not ellipsoids_disjoint(ball, o.outer) for o in same)
            most = max(most, count)
            res.record([count - bound])
        worst[str(beta)] = most
    res.notes["max_neighbours"] = worst
    res.notes["fill_nodes"] = dag.build_stats.fill_count
    return res


def suite_coverage(ctx: ValidationContext) -> SuiteResult:
    from .avd import coverage_audit

    res = SuiteResult("coverage", seed=ctx.seed)
    dag = ctx.structure()
    rate, total = coverage_audit(dag, 10 * ctx.samples * 10, ctx.samples, ctx.seed)
    res.checks = total
    res.violations = int(round(rate * total))
    res.max_violation = rate
    return res


def query_points(dag: AvdDag, count: int, rng) -> np.ndarray:
    dom = dag.domain
    g = rng.standard_normal((count, dag.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return dom.center + g * (dom.radius * rng.uniform(size=count) ** (1.0 / dag.dim))[:, None]


def suite_correctness(ctx: ValidationContext) -> SuiteResult:
    res = SuiteResult("correctness", seed=ctx.seed)
    dag = ctx.structure()
    Q = query_points(dag, ctx.queries, ctx.rng(res.name))
    D = dag.source.distances_many(Q)
    got = np.array([dag.query(q).segment for q in Q])
    excess = D[np.arange(len(Q)), got] - (1.0 + dag.eps) * D.min(axis=1) - 1e-9
    res.record(excess)
    leaves = [nd for nd in dag.nodes if nd.kind == FINAL_LEAF]
    rng = ctx.rng("representatives")
    picks = rng.choice(len(leaves), size=min(200, len(leaves)), replace=False)
    for k in picks:
        nd = leaves[int(k)]
        Z = nd.outer.sample_interior(100, rng)
        D = dag.source.distances_many(Z)
        res.record(D[:, nd.representative] - (1.0 + dag.eps) * D.min(axis=1) - 1e-9)
    return res


SUITES = {
    "lipschitz": suite_lipschitz,
    "tensor": suite_tensor,
    "lemma1": suite_metric_cell,
    "eq8": suite_capsule_tensor,
    "lemma2": suite_expansion,
    "lemma4": suite_passport,
    "cor6": suite_representative,
    "lemma7": suite_radius_scaling,
    "lemma8": suite_volume_scaling,
    "lemma10": suite_expansion_lfs,
    "sec5": suite_bounding_volumes,
    "packing": suite_packing,
    "coverage": suite_coverage,
    "correctness": suite_correctness,
}


@dataclass
class ValidationReport:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self) -> dict:
        return {"passed": self.passed, "suites": [r.to_json() for r in self.results]}

    def to_text(self) -> str:
        rows = [("suite", "status", "checks", "violations", "max_violation", "skipped")]
        for r in self.results:
            rows.append((r.name, "pass" if r.passed else "FAIL", str(r.checks), str(r.violations),
                         f"{r.max_violation:.3g}", str(r.skipped)))
        widths = [max(len(row[k]) for row in rows) for k in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows) + "\n"


def run_validation(suites, seed: int = 0, **kw) -> ValidationReport:
    """Run the named suites (all when ``suites`` is None); results are sorted by name."""
    names = sorted(SUITES) if suites is None else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(sorted(SUITES))}")
    ctx = ValidationContext(seed=seed, **kw)
    return ValidationReport([SUITES[name](ctx) for name in sorted(set(names))])


# -- benchmark -------------------------------------------------------------


@dataclass
class BenchRow:
    fixture: str
    n: int
    dim: int
    epsilon: float
    node_count: int
    levels: int
    max_out_degree: int
    max_pair_charge: int
    queries: int
    correct_rate: float
    build_seconds: float | None = None
    query_mean_us: float | None = None
    query_p50_us: float | None = None
    query_p99_us: float | None = None


@dataclass
class BenchReport:
    rows: list

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(BenchRow.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    def to_text(self) -> str:
        names = list(BenchRow.__dataclass_fields__)
        fmt = lambda v: "-" if v is None else (f"{v:.4g}" if isinstance(v, float) else str(v))
        rows = [names] + [[fmt(getattr(r, k)) for k in names] for r in self.rows]
        widths = [max(len(row[k]) for row in rows) for k in range(len(names))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows) + "\n"


def run_bench(fixtures, eps_list, queries: int = 1000, seed: int = 0, timing: bool = True,
              config: BuildConfig | None = None) -> BenchReport:
    """Build every fixture at every epsilon and measure queries against the oracle.

    ``fixtures`` is a list of ``(name, SegmentSet)``. Without ``timing`` the
    report is a pure function of its inputs.
    """
    rows = []
    for name, S in fixtures:
        for eps in eps_list:
            cfg = BuildConfig(**{**asdict(config or BuildConfig(audit=False)), "seed": seed})
            t0 = time.perf_counter()
            dag = build(S, eps, cfg)
            built = time.perf_counter() - t0
            st = dag.stats()
            rng = np.random.default_rng([seed, S.n, S.dim])
            Q = query_points(dag, queries, rng) if queries else np.zeros((0, S.dim))
            lat = []
            ok = 0
            for q in Q:
                t0 = time.perf_counter()
                r = dag.query(q)
                lat.append(time.perf_counter() - t0)
                ok += r.distance <= (1 + eps) * S.distances(q).min() + 1e-9
            row = BenchRow(name, S.n, S.dim, eps, st.node_count, st.levels, st.max_out_degree,
                           st.max_pair_charge, len(Q), ok / len(Q) if len(Q) else 1.0)
            if timing:
                row.build_seconds = built
                if lat:
                    us = np.array(lat) * 1e6
                    row.query_mean_us = float(us.mean())
                    row.query_p50_us = float(np.percentile(us, 50))
                    row.query_p99_us = float(np.percentile(us, 99))
            rows.append(row)
    return BenchReport(rows)


def report_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
