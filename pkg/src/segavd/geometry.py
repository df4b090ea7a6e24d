"""Distance primitives, instance statistics and local feature size.

Segments are stored as endpoint arrays so that every per-point quantity can
be evaluated against all segments at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .config import TOL, InvalidInstanceError, NotDefinedError, ParseError, UsageError


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray
    id: int = 0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise UsageError("segment endpoints must be vectors of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def direction(self) -> np.ndarray:
        """Unit vector from a to b."""
        return (self.b - self.a) / self.length


class Projection(NamedTuple):
    distance: float
    t: float  # clamped parameter of the foot, in [0, 1]
    interior: bool
    foot: np.ndarray


def _as_point(q, dim: int | None = None) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise UsageError("a point must be a 1-d coordinate vector")
    if dim is not None and q.shape[0] != dim:
        raise UsageError(f"dimension mismatch: point has {q.shape[0]} coords, expected {dim}")
    return q


def project_onto_segment(q, s: Segment) -> Projection:
    q = _as_point(q, s.dim)
    ab = s.b - s.a
    denom = float(ab @ ab)
    if denom == 0.0:
        return Projection(float(np.linalg.norm(q - s.a)), 0.0, False, s.a.copy())
    t = float((q - s.a) @ ab) / denom
    interior = 0.0 < t < 1.0
    tc = min(max(t, 0.0), 1.0)
    foot = s.a + tc * ab
    return Projection(float(np.linalg.norm(q - foot)), tc, interior, foot)


def dist_point_segment(q, s: Segment) -> float:
    """Euclidean distance from ``q`` to the closed segment ``s``."""
    return project_onto_segment(q, s).distance


def dist_segment_segment(s1: Segment, s2: Segment) -> float:
    """Distance between two closed segments.

    The minimum is either attained at an endpoint of one segment (four
    point-segment distances) or at an interior critical point of the
    quadratic in both parameters, which exists only for non-parallel lines.
    """
    if s1.dim != s2.dim:
        raise UsageError("dimension mismatch between segments")
    best = min(
        dist_point_segment(s1.a, s2),
        dist_point_segment(s1.b, s2),
        dist_point_segment(s2.a, s1),
        dist_point_segment(s2.b, s1),
    )
    d1 = s1.b - s1.a
    d2 = s2.b - s2.a
    r = s1.a - s2.a
    a = d1 @ d1
    e = d2 @ d2
    b = d1 @ d2
    c = d1 @ r
    f = d2 @ r
    det = a * e - b * b
    if det > TOL.parallel * a * e:
        s = (b * f - c * e) / det
        t = (a * f - b * c) / det
        if 0.0 < s < 1.0 and 0.0 < t < 1.0:
            best = min(best, float(np.linalg.norm((s1.a + s * d1) - (s2.a + t * d2))))
    return best


def _pairwise_segment_distances(A: np.ndarray, B: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Vectorised segment-segment distance for index pairs (i, j)."""

    def pt_seg(p, a, b):
        ab = b - a
        den = np.einsum("ij,ij->i", ab, ab)
        t = np.einsum("ij,ij->i", p - a, ab) / np.where(den > 0, den, 1.0)
        t = np.clip(t, 0.0, 1.0)
        return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)

    a1, b1, a2, b2 = A[i], B[i], A[j], B[j]
    best = np.minimum.reduce([pt_seg(a1, a2, b2), pt_seg(b1, a2, b2), pt_seg(a2, a1, b1), pt_seg(b2, a1, b1)])
    d1 = b1 - a1
    d2 = b2 - a2
    r = a1 - a2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    b = np.einsum("ij,ij->i", d1, d2)
    c = np.einsum("ij,ij->i", d1, r)
    f = np.einsum("ij,ij->i", d2, r)
    det = a * e - b * b
    ok = det > TOL.parallel * a * e
    safe = np.where(ok, det, 1.0)
    s = (b * f - c * e) / safe
    t = (a * f - b * c) / safe
    inner = ok & (s > 0) & (s < 1) & (t > 0) & (t < 1)
    if inner.any():
        p = a1 + s[:, None] * d1
        q = a2 + t[:, None] * d2
        best = np.where(inner, np.minimum(best, np.linalg.norm(p - q, axis=1)), best)
    return best


class InstanceStats(NamedTuple):
    diam: float
    min_gap: float | None
    spread: float | None


@dataclass(frozen=True, eq=False)
class SegmentSet:
    """An immutable set of pairwise disjoint segments in R^d.

    ``A`` and ``B`` hold the endpoints row-wise. Derived arrays (unit
    directions, lengths) and the instance statistics are computed once.
    """

    A: np.ndarray
    B: np.ndarray
    allow_degenerate: bool = False
    validate: bool = True
    _stats: InstanceStats = field(init=False, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 2 or A.shape != B.shape:
            raise UsageError("endpoint arrays must both have shape (n, d)")
        if A.shape[0] < 1:
            raise InvalidInstanceError("a segment set needs at least one segment")
        if A.shape[1] < 2:
            raise UsageError("dimension must be at least 2")
        if not (np.isfinite(A).all() and np.isfinite(B).all()):
            raise InvalidInstanceError("segment coordinates must be finite")
        lengths = np.linalg.norm(B - A, axis=1)
        if not self.allow_degenerate and (lengths == 0).any():
            raise InvalidInstanceError(f"zero-length segment(s): {np.flatnonzero(lengths == 0).tolist()}")
        for arr in (A, B, lengths):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "lengths", lengths)
        with np.errstate(invalid="ignore", divide="ignore"):
            V = np.where(lengths[:, None] > 0, (B - A) / lengths[:, None], 0.0)
        V.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "_stats", _compute_stats(A, B))
        if self.validate and self._stats.min_gap is not None and self._stats.min_gap <= 0.0:
            raise InvalidInstanceError("segments intersect or touch (minimum gap is zero)")

    @classmethod
    def from_list(cls, segments: Sequence, **kw) -> "SegmentSet":
        arr = np.asarray(segments, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != 2:
            raise UsageError("expected a list of [[a...], [b...]] pairs")
        return cls(arr[:, 0, :], arr[:, 1, :], **kw)

    def __len__(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def segment(self, i: int) -> Segment:
        return Segment(self.A[i], self.B[i], int(i))

    def __iter__(self):
        return (self.segment(i) for i in range(self.n))

    @property
    def stats(self) -> InstanceStats:
        return self._stats

    @property
    def diam(self) -> float:
        return self._stats.diam

    @property
    def min_gap(self) -> float | None:
        return self._stats.min_gap

    @property
    def spread(self) -> float | None:
        return self._stats.spread

    def endpoints(self) -> np.ndarray:
        return np.vstack([self.A, self.B])

    def to_list(self) -> list:
        return [[a.tolist(), b.tolist()] for a, b in zip(self.A, self.B)]

    # -- batched distance kernels -------------------------------------

    def project(self, x: np.ndarray):
        """Per-segment projection data for a single point.

        Returns ``(t, dist_line, dist_a, dist_b)`` where ``t`` is the
        unclamped coordinate of the foot along each segment, measured in
        units of length from ``a``.
        """
        x = _as_point(x, self.dim)
        ax = x - self.A
        t = np.einsum("ij,ij->i", ax, self.V)
        perp = ax - t[:, None] * self.V
        dl = np.linalg.norm(perp, axis=1)
        da = np.linalg.norm(ax, axis=1)
        db = np.linalg.norm(x - self.B, axis=1)
        return t, dl, da, db

    def distances(self, x) -> np.ndarray:
        """Distances from one point to every segment."""
        t, dl, da, db = self.project(x)
        interior = (t > 0) & (t < self.lengths)
        return np.where(interior, dl, np.minimum(da, db))

    def distances_many(self, X) -> np.ndarray:
        """Distance matrix of shape (m, n) for points ``X`` of shape (m, d)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise UsageError("points must have shape (m, d)")
        ab = self.B - self.A
        den = np.where(self.lengths > 0, self.lengths**2, 1.0)
        rel = X[:, None, :] - self.A[None, :, :]
        t = np.clip(np.einsum("mnd,nd->mn", rel, ab) / den, 0.0, 1.0)
        foot = self.A[None] + t[..., None] * ab[None]
        return np.linalg.norm(X[:, None, :] - foot, axis=2)


def _compute_stats(A: np.ndarray, B: np.ndarray) -> InstanceStats:
    P = np.vstack([A, B])
    diam = float(pdist(P).max()) if len(P) > 1 else 0.0
    n = A.shape[0]
    if n < 2:
        return InstanceStats(diam, None, None)
    i, j = np.triu_indices(n, 1)
    gap = float(_pairwise_segment_distances(A, B, i, j).min())
    spread = diam / gap if gap > 0 else math.inf
    return InstanceStats(diam, gap, spread)


def instance_stats(S: SegmentSet) -> InstanceStats:
    """Diameter, minimum inter-segment gap and spread of ``S``.

    Raises InvalidInstanceError if two segments touch.
    """
    st = _compute_stats(S.A, S.B)
    if st.min_gap is not None and st.min_gap <= 0.0:
        raise InvalidInstanceError("segments intersect or touch (minimum gap is zero)")
    return st


class LocalFeature(NamedTuple):
    phi: float
    nearest: int
    second: int


def nearest_two(dists: np.ndarray) -> tuple[int, int]:
    """Indices of the smallest and second smallest entries, ties by lowest id."""
    order = np.lexsort((np.arange(len(dists)), dists))
    return int(order[0]), int(order[1])


def local_feature_size(x, S: SegmentSet) -> LocalFeature:
    """Distance from ``x`` to its second-nearest segment."""
    if S.n < 2:
        raise NotDefinedError("local feature size needs at least two segments")
    d = S.distances(x)
    i, j = nearest_two(d)
    return LocalFeature(float(d[j]), i, j)


def nearest_segment(x, S: SegmentSet) -> tuple[int, float]:
    d = S.distances(x)
    i = int(np.argmin(d))  # argmin returns the first, i.e. lowest id, on ties
    return i, float(d[i])


# -- minimum enclosing ball ---------------------------------------------


def _circumsphere(R: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Smallest sphere through all points of R (their circumsphere in aff(R))."""
    p0 = R[0]
    if len(R) == 1:
        return p0.copy(), 0.0
    D = np.array([p - p0 for p in R[1:]])
    G = D @ D.T
    rhs = 0.5 * np.einsum("ij,ij->i", D, D)
    lam, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    c = p0 + lam @ D
    return c, float(np.linalg.norm(c - p0))


def minimum_enclosing_ball(points, seed: int = 0) -> tuple[np.ndarray, float]:
    """Welzl's move-to-front algorithm, iterative over the support set.

    Expected linear time in the number of points for fixed dimension.
    """
    P = np.asarray(points, dtype=float)
    if len(P) == 0:
        raise UsageError("need at least one point")
    # dedupe so the support set stays affinely independent
    P = np.unique(P, axis=0)
    rng = np.random.default_rng(seed)
    P = P[rng.permutation(len(P))]
    d = P.shape[1]
    slack = 1e-12

    def inside(c, r, p):
        return np.linalg.norm(p - c) <= r * (1 + slack) + slack

    def mb(pts: np.ndarray, R: list[np.ndarray]):
        if R:
            c, r = _circumsphere(R)
        else:
            c, r = pts[0].copy(), 0.0
        if len(R) == d + 1:
            return c, r
        for k in range(len(pts)):
            if not inside(c, r, pts[k]):
                c, r = mb(pts[:k], R + [pts[k]])
        return c, r

    # recursion depth is bounded by d + 1
    return mb(P, [])


@dataclass(frozen=True)
class DomainBall:
    center: np.ndarray
    radius: float
    inner_radius: float

    def contains(self, q, slack: float = 0.0) -> bool:
        return float(np.linalg.norm(np.asarray(q, dtype=float) - self.center)) <= self.radius + slack


def domain_ball(S: SegmentSet, eps: float) -> DomainBall:
    """Minimum enclosing ball of the endpoints, expanded by ``1 + 2/eps``."""
    if not eps > 0:
        raise UsageError("epsilon must be positive")
    c, r = minimum_enclosing_ball(S.endpoints())
    return DomainBall(c, (1.0 + 2.0 / eps) * r, r)


# -- instance files -------------------------------------------------------


def load_instance(path) -> SegmentSet:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return instance_from_dict(doc, source=str(path))


def instance_from_dict(doc: dict, source: str = "<instance>") -> SegmentSet:
    if not isinstance(doc, dict) or "dim" not in doc or "segments" not in doc:
        raise ParseError(f"{source}: expected an object with 'dim' and 'segments'")
    dim = doc["dim"]
    segs = doc["segments"]
    if not isinstance(dim, int) or dim < 2:
        raise ParseError(f"{source}: 'dim' must be an integer >= 2")
    for k, seg in enumerate(segs):
        if (
            not isinstance(seg, list)
            or len(seg) != 2
            or any(not isinstance(p, list) or len(p) != dim for p in seg)
        ):
            raise ParseError(f"{source}: segment {k} does not have two {dim}-d endpoints")
    try:
        return SegmentSet.from_list(segs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInstanceError):
            raise
        raise ParseError(f"{source}: {exc}") from exc


def instance_to_dict(S: SegmentSet) -> dict:
    return {"dim": S.dim, "segments": S.to_list()}
