"""Half-squared distance functions, their Hessians and the local tensors.

All distances here are *half squared* Euclidean distances, so a point at
Euclidean distance ``h`` from a line has ``d_line = h**2 / 2``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import TOL, SingularTensorError, UsageError
from .geometry import Segment, SegmentSet, _as_point


class DistanceTriple(NamedTuple):
    d_seg: float
    d_line: float
    d_endpoint: float
    interior_foot: bool


class LocalTensor(NamedTuple):
    matrix: np.ndarray
    eigen_small: float  # 1 / d_endpoint, eigenvector = axis
    eigen_large: float  # 1 / d_seg, multiplicity d - 1
    axis: np.ndarray


def distance_triple(x, s: Segment) -> DistanceTriple:
    x = _as_point(x, s.dim)
    v = s.direction
    ax = x - s.a
    t = float(ax @ v)
    perp = ax - t * v
    d_line = 0.5 * float(perp @ perp)
    d_end = 0.5 * min(float(ax @ ax), float((x - s.b) @ (x - s.b)))
    interior = 0.0 < t < s.length
    return DistanceTriple(d_line if interior else d_end, d_line, d_end, interior)


def hessian_line(v) -> np.ndarray:
    """Hessian ``I - v v^T`` of the half squared distance to a line along ``v``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or abs(np.linalg.norm(v) - 1.0) > TOL.unit:
        raise UsageError("hessian_line needs a unit vector")
    return np.eye(len(v)) - np.outer(v, v)


def hessian_point(dim: int) -> np.ndarray:
    return np.eye(dim)


def local_tensor(x, s: Segment) -> LocalTensor:
    tri = distance_triple(x, s)
    if tri.d_seg <= 0.0 or tri.d_endpoint <= 0.0:
        raise SingularTensorError("local tensor is singular on the segment")
    v = s.direction
    P = hessian_line(v)
    vv = np.outer(v, v)
    M = P / tri.d_seg + vv / tri.d_endpoint
    return LocalTensor(0.5 * (M + M.T), 1.0 / tri.d_endpoint, 1.0 / tri.d_seg, v)


def _quad(H: np.ndarray, u: np.ndarray) -> float:
    return 0.5 * float(u @ H @ u)


def local_ellipsoid_form(x, s: Segment, y) -> float:
    """Value of ``1/2 (y-x)^T H_i(x) (y-x)``; membership iff <= 1."""
    x = _as_point(x, s.dim)
    y = _as_point(y, s.dim)
    return _quad(local_tensor(x, s).matrix, y - x)


def local_ellipsoid_membership(x, s: Segment, y) -> bool:
    return local_ellipsoid_form(x, s, y) <= 1.0 + TOL.rel_membership


def tensor_stack(x, S: SegmentSet) -> np.ndarray:
    """All local tensors at ``x`` as an array of shape (n, d, d)."""
    x = _as_point(x, S.dim)
    t, dl, da, db = S.project(x)
    interior = (t > 0) & (t < S.lengths)
    d_end = 0.5 * np.minimum(da, db) ** 2
    d_seg = np.where(interior, 0.5 * dl**2, d_end)
    if (d_seg <= 0).any():
        raise SingularTensorError("point lies on a segment")
    eye = np.eye(S.dim)
    vv = np.einsum("ni,nj->nij", S.V, S.V)
    return (eye - vv) / d_seg[:, None, None] + vv / d_end[:, None, None]


def blended_tensor(x, S: SegmentSet) -> np.ndarray:
    """Sum of the local tensors of all segments at ``x``."""
    return tensor_stack(x, S).sum(axis=0)


def metric_norm_sq(x, S: SegmentSet, y) -> float:
    x = _as_point(x, S.dim)
    y = _as_point(y, S.dim)
    return _quad(blended_tensor(x, S), y - x)


def metric_ball_membership(x, S: SegmentSet, y) -> bool:
    return metric_norm_sq(x, S, y) <= 1.0 + TOL.rel_membership


def cell_forms(x, S: SegmentSet, y) -> np.ndarray:
    """Per-segment forms ``1/2 (y-x)^T H_i(x) (y-x)``."""
    x = _as_point(x, S.dim)
    u = _as_point(y, S.dim) - x
    return 0.5 * np.einsum("i,nij,j->n", u, tensor_stack(x, S), u)


def cell_membership(x, S: SegmentSet, y) -> bool:
    """Membership in the intersection of all per-segment ellipsoids."""
    return bool((cell_forms(x, S, y) <= 1.0 + TOL.rel_membership).all())


def ellipsoid_axes(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Semi-axes and axis directions of ``{u : 1/2 u^T H u <= 1}``."""
    w, Q = np.linalg.eigh(0.5 * (H + H.T))
    return np.sqrt(2.0 / w), Q


def sample_ellipsoid_boundary(H: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Offsets ``u`` with ``1/2 u^T H u = 1``, uniform in whitened angle."""
    w, Q = np.linalg.eigh(0.5 * (H + H.T))
    g = rng.standard_normal((count, H.shape[0]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return (g * np.sqrt(2.0 / w)) @ Q.T
