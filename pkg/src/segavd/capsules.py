"""Capsules: intersections of concentric cylinders and balls about a point.

A capsule ``C(x, r)`` is stored as a list of quadratic constraints
``(z - x)^T M_j (z - x) <= t_j**2`` with ``M_j`` either the identity (ball)
or ``I - v v^T`` (cylinder with axis ``v`` through ``x``). Scaling a capsule
about its center by ``lam`` replaces every ``t_j`` by ``lam * t_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gamma as _gamma

from .config import TOL, UsageError
from .geometry import SegmentSet, _as_point, nearest_two

BALL = "ball"
CYLINDER = "cylinder"


@dataclass(frozen=True)
class ConcentricConstraint:
    kind: str
    threshold: float
    axis: np.ndarray | None = None
    segment: int = -1

    def matrix(self, dim: int) -> np.ndarray:
        if self.kind == BALL:
            return np.eye(dim)
        return np.eye(dim) - np.outer(self.axis, self.axis)


class Capsule:
    """Capsule about ``center`` with per-constraint arrays.

    ``axes[j]`` is the cylinder axis (zero vector for balls) and
    ``thresholds[j]`` its radius. ``reduced()`` drops constraints implied by
    the smallest ball.
    """

    __slots__ = ("center", "r", "axes", "thresholds", "is_cyl", "segments", "_reduced")

    def __init__(self, center, r, axes, thresholds, is_cyl, segments):
        self.center = np.asarray(center, dtype=float)
        self.r = float(r)
        self.axes = np.asarray(axes, dtype=float).reshape(-1, self.center.shape[0])
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.is_cyl = np.asarray(is_cyl, dtype=bool)
        self.segments = np.asarray(segments, dtype=int)
        self._reduced = None

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def __len__(self) -> int:
        return len(self.thresholds)

    @property
    def constraints(self) -> list[ConcentricConstraint]:
        out = []
        for ax, t, cyl, seg in zip(self.axes, self.thresholds, self.is_cyl, self.segments):
            if cyl:
                out.append(ConcentricConstraint(CYLINDER, float(t), ax.copy(), int(seg)))
            else:
                out.append(ConcentricConstraint(BALL, float(t), None, int(seg)))
        return out

    def matrices(self) -> np.ndarray:
        eye = np.eye(self.dim)
        vv = np.einsum("ni,nj->nij", self.axes, self.axes)
        return np.where(self.is_cyl[:, None, None], eye - vv, eye)

    @property
    def ball_radius(self) -> float:
        return float(self.thresholds[~self.is_cyl].min())

    def reduced(self) -> "Capsule":
        if self._reduced is None:
            tb = self.ball_radius
            keep = self.is_cyl & (self.thresholds < tb)
            jb = int(np.flatnonzero(~self.is_cyl & (self.thresholds == tb))[0])
            idx = np.concatenate([[jb], np.flatnonzero(keep)])
            red = Capsule(self.center, self.r, self.axes[idx], self.thresholds[idx], self.is_cyl[idx], self.segments[idx])
            red._reduced = red
            self._reduced = red
        return self._reduced

    def forms(self, Z) -> np.ndarray:
        """Ratios ``(z-x)^T M_j (z-x) / t_j**2``, shape (m, k)."""
        U = np.atleast_2d(np.asarray(Z, dtype=float)) - self.center
        sq = np.einsum("md,md->m", U, U)[:, None]
        along = U @ self.axes.T
        q = np.where(self.is_cyl[None, :], sq - along**2, sq)
        return np.maximum(q, 0.0) / self.thresholds[None, :] ** 2

    def gauge(self, Z) -> np.ndarray:
        """Smallest scale ``lam`` with ``z`` in the scaled capsule, per point."""
        return np.sqrt(self.reduced().forms(Z).max(axis=1))

    def contains(self, Z, lam: float = 1.0) -> np.ndarray:
        if not lam > 0:
            raise UsageError("scale must be positive")
        f = self.reduced().forms(Z)
        return (f <= lam * lam * (1.0 + TOL.rel_membership)).all(axis=1)

    def extent(self, U) -> np.ndarray:
        """Distance from the center to the boundary along unit directions ``U``."""
        red = self.reduced()
        U = np.atleast_2d(np.asarray(U, dtype=float))
        along = U @ red.axes.T
        q = np.where(red.is_cyl[None, :], 1.0 - along**2, 1.0)
        with np.errstate(divide="ignore"):
            lim = np.where(q > 0, red.thresholds[None, :] / np.sqrt(np.maximum(q, 0.0)), np.inf)
        return lim.min(axis=1)

    def scaled_bbox(self, lam: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        h = lam * self.ball_radius
        return self.center - h, self.center + h

    def to_json(self) -> list[dict]:
        out = []
        for c in self.constraints:
            item = {"kind": c.kind, "threshold": c.threshold, "segment": c.segment}
            if c.axis is not None:
                item["axis"] = c.axis.tolist()
            out.append(item)
        return out


def build_capsule(S: SegmentSet, x, r: float) -> Capsule:
    """Capsule ``C_S(x, r)``: one ball, or a cylinder plus a ball, per segment."""
    if r < 0:
        raise UsageError("distance parameter must be non-negative")
    x = _as_point(x, S.dim)
    t, dl, da, db = S.project(x)
    interior = (t > 0) & (t < S.lengths)
    dend = np.minimum(da, db)
    ball_t = np.maximum(r, dend)
    cyl_t = np.maximum(r, dl)
    n = S.n
    ic = np.flatnonzero(interior)
    axes = np.vstack([np.zeros((n, S.dim)), S.V[ic]])
    thresholds = np.concatenate([ball_t, cyl_t[ic]])
    is_cyl = np.concatenate([np.zeros(n, bool), np.ones(len(ic), bool)])
    segs = np.concatenate([np.arange(n), ic])
    if (thresholds <= 0).any():
        # x on a segment with r = 0: the capsule degenerates to the point x
        thresholds = np.maximum(thresholds, 0.0)
    return Capsule(x, r, axes, thresholds, is_cyl, segs)


def capsule_membership(C: Capsule, z, lam: float = 1.0) -> bool:
    return bool(C.contains(_as_point(z, C.dim)[None, :], lam)[0])


# -- feasibility witness ---------------------------------------------------


def _project_constraint(z, c, axis, is_cyl, t):
    u = z - c
    if is_cyl:
        w = u - (u @ axis) * axis
        nw = np.linalg.norm(w)
        if nw > t:
            return z - w * (1.0 - t / nw)
        return z
    nu = np.linalg.norm(u)
    if nu > t:
        return c + u * (t / nu)
    return z


def shrunken_intersection_witness(
    C1: Capsule, C2: Capsule, lam: float, max_iter: int = 200, tol: float = 1e-10
) -> np.ndarray | None:
    """A point in both ``C1^lam`` and ``C2^lam`` found by cyclic projections.

    Returns None when no witness is found within ``max_iter`` sweeps; that is
    not a proof of disjointness.
    """
    if C1.dim != C2.dim:
        raise UsageError("capsules live in different dimensions")
    R1, R2 = C1.reduced(), C2.reduced()
    cons = [(R1.center, a, c, lam * t) for a, c, t in zip(R1.axes, R1.is_cyl, R1.thresholds)]
    cons += [(R2.center, a, c, lam * t) for a, c, t in zip(R2.axes, R2.is_cyl, R2.thresholds)]
    z = 0.5 * (C1.center + C2.center)
    scale = max(R1.ball_radius, R2.ball_radius, 1e-300)

    def ok(p):
        g1 = R1.gauge(p[None])[0]
        g2 = R2.gauge(p[None])[0]
        return g1 <= lam * (1 + 1e-10) and g2 <= lam * (1 + 1e-10)

    if ok(z):
        return z
    for _ in range(max_iter):
        prev = z
        for c, a, cyl, t in cons:
            z = _project_constraint(z, c, a, cyl, t)
        if ok(z):
            return z
        if np.linalg.norm(z - prev) <= tol * scale:
            break
    return None


# -- sampling ------------------------------------------------------------


def sample_boundary(C: Capsule, count: int, rng: np.random.Generator, lam: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((count, C.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return C.center + g * (lam * C.extent(g))[:, None]


def sample_interior(C: Capsule, count: int, rng: np.random.Generator, lam: float = 1.0) -> np.ndarray:
    """Uniform samples of ``C^lam`` by rejection from its bounding box."""
    lo, hi = C.scaled_bbox(lam)
    out = []
    got = 0
    batch = max(64, 2 * count)
    while got < count:
        Z = rng.uniform(lo, hi, size=(batch, C.dim))
        Z = Z[C.gauge(Z) <= lam]
        out.append(Z)
        got += len(Z)
    return np.vstack(out)[:count]


class VolumeEstimate(NamedTuple):
    volume: float
    stderr: float
    hits: int
    samples: int
    flagged: bool


def mc_volume(
    membership: Callable[[np.ndarray], np.ndarray],
    bbox: tuple[np.ndarray, np.ndarray],
    samples: int,
    seed: int,
    batch: int = 200_000,
) -> VolumeEstimate:
    """Hit-or-miss Monte Carlo volume with its standard error."""
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    left = samples
    while left > 0:
        m = min(batch, left)
        Z = rng.uniform(lo, hi, size=(m, len(lo)))
        hits += int(np.count_nonzero(membership(Z)))
        left -= m
    p = hits / samples
    se = box * math.sqrt(p * (1 - p) / samples)
    return VolumeEstimate(box * p, se, hits, samples, hits == 0)


# -- bounding volumes ------------------------------------------------------


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / _gamma(k / 2 + 1)


@dataclass(frozen=True)
class BoundingVolumes:
    center: np.ndarray
    axis: np.ndarray
    base_radius: float
    apex: np.ndarray
    half_height: float  # |apex - x|, the cone half-length
    cylinder_half_height: float  # half-height of the outer cylinder
    angle: float | None
    nearest: int
    second: int | None
    degenerate: bool
    unit_ball_volume: float

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def inner_contains(self, Z) -> np.ndarray:
        """Membership in the double cone."""
        if self.degenerate:
            return np.linalg.norm(np.atleast_2d(Z) - self.center, axis=1) <= self.base_radius * (1 + 1e-12)
        U = np.atleast_2d(np.asarray(Z, dtype=float)) - self.center
        a = np.abs(U @ self.axis)
        w = np.linalg.norm(U - np.outer(U @ self.axis, self.axis), axis=1)
        return (a <= self.half_height) & (w <= self.base_radius * (1 - a / self.half_height) * (1 + 1e-12) + 1e-15)

    def outer_contains(self, Z) -> np.ndarray:
        if self.degenerate:
            return self.inner_contains(Z)
        U = np.atleast_2d(np.asarray(Z, dtype=float)) - self.center
        a = np.abs(U @ self.axis)
        w = np.linalg.norm(U - np.outer(U @ self.axis, self.axis), axis=1)
        return (a <= self.cylinder_half_height * (1 + 1e-12)) & (w <= self.base_radius * (1 + 1e-12))

    @property
    def inner_volume(self) -> float:
        if self.degenerate:
            return unit_ball_volume(self.dim) * self.base_radius**self.dim
        return 2.0 * self.unit_ball_volume * self.base_radius ** (self.dim - 1) * self.half_height / self.dim

    @property
    def outer_volume(self) -> float:
        if self.degenerate:
            return self.inner_volume
        return self.unit_ball_volume * self.base_radius ** (self.dim - 1) * 2.0 * self.cylinder_half_height

    @property
    def ratio(self) -> float:
        return self.outer_volume / self.inner_volume

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        h = max(self.base_radius, self.cylinder_half_height)
        return self.center - h, self.center + h


def bounding_volumes(S: SegmentSet, x, r: float) -> BoundingVolumes:
    """Double cone inside and cylinder outside the capsule ``C(x, r)``.

    The cone has its base disk (radius ``t1``) at ``x`` orthogonal to the
    nearest segment and its apexes where the line through ``x`` along that
    segment leaves the capsule. The cylinder's half-height bounds the
    projection of the two cylinders' intersection, capped by the ball.
    """
    x = _as_point(x, S.dim)
    C = build_capsule(S, x, r)
    d = S.distances(x)
    if S.n >= 2:
        s1, s2 = nearest_two(d)
    else:
        s1, s2 = 0, None
    cyl1 = np.flatnonzero(C.is_cyl & (C.segments == s1))
    k = S.dim
    if len(cyl1) == 0:
        rad = C.ball_radius
        return BoundingVolumes(x, np.zeros(k), rad, x.copy(), rad, rad, None, s1, s2, True, unit_ball_volume(k - 1))
    j1 = int(cyl1[0])
    v1 = C.axes[j1]
    t1 = float(C.thresholds[j1])
    # extent along +v1 through every constraint other than Cyl_1
    others = np.arange(len(C)) != j1
    along = C.axes[others] @ v1
    cyl = C.is_cyl[others]
    q = np.where(cyl, 1.0 - along**2, 1.0)
    th = C.thresholds[others]
    with np.errstate(divide="ignore"):
        reach = np.where(q > 1e-15, th / np.sqrt(np.maximum(q, 0.0)), np.inf)
    jj = int(np.argmin(reach))
    T = float(reach[jj])
    gen_idx = np.flatnonzero(others)[jj]
    ball_cap = float(C.thresholds[~C.is_cyl].min())
    angle = None
    H = ball_cap
    if C.is_cyl[gen_idx]:
        v2 = C.axes[gen_idx]
        c = min(1.0, abs(float(v1 @ v2)))
        sin = math.sqrt(max(0.0, 1.0 - c * c))
        angle = math.atan2(sin, c)
        t2 = float(C.thresholds[gen_idx])
        if sin > 0:
            H = min(H, (t2 + t1 * c) / sin)
    H = max(H, T)
    return BoundingVolumes(
        x, v1.copy(), t1, x + T * v1, T, H, angle, s1, s2, False, unit_ball_volume(k - 1)
    )
