"""Ellipsoids, concentric containment and inscribed capsule ellipsoids.

An ellipsoid is ``{y : (y - c)^T A (y - c) <= 1}``. Everything else (the
symmetric factor ``L`` with ``A = (L L^T)^{-1}``, semi-axes) is derived from
``A`` alone so that serialised ellipsoids reproduce bit-for-bit.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .capsules import Capsule, build_capsule
from .config import TOL, ScaleConstants, UsageError
from .geometry import SegmentSet


class Ellipsoid:
    __slots__ = ("center", "shape", "_axes", "_dirs", "_factor", "_inv_factor")

    def __init__(self, center, shape, _check: bool = True):
        c = np.asarray(center, dtype=float)
        A = np.asarray(shape, dtype=float)
        if _check:
            if A.shape != (c.shape[0], c.shape[0]):
                raise UsageError("shape matrix does not match the center's dimension")
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(A).max()))):
                raise UsageError("shape matrix must be symmetric")
            A = 0.5 * (A + A.T)
        self.center = c
        self.shape = A
        self._axes = None
        self._factor = None
        self._inv_factor = None
        if _check:
            self._eig()

    def _eig(self):
        if self._axes is None:
            w, Q = np.linalg.eigh(self.shape)
            if not (w > 0).all():
                raise UsageError("shape matrix must be positive definite")
            self._axes = 1.0 / np.sqrt(w)
            self._dirs = Q
        return self._axes, self._dirs

    @property
    def semi_axes(self) -> np.ndarray:
        return self._eig()[0]

    @property
    def directions(self) -> np.ndarray:
        return self._eig()[1]

    @property
    def factor(self) -> np.ndarray:
        """Symmetric ``L`` with ``E = {c + L u : |u| <= 1}``."""
        if self._factor is None:
            a, Q = self._eig()
            self._factor = (Q * a) @ Q.T
        return self._factor

    @classmethod
    def from_factor(cls, center, L) -> "Ellipsoid":
        """Ellipsoid ``{c + L u : |u| <= 1}``."""
        L = np.asarray(L, dtype=float)
        W = L @ L.T
        return cls(center, np.linalg.inv(0.5 * (W + W.T)))

    @classmethod
    def ball(cls, center, radius: float) -> "Ellipsoid":
        c = np.asarray(center, dtype=float)
        return cls(c, np.eye(len(c)) / radius**2)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def inv_factor(self) -> np.ndarray:
        if self._inv_factor is None:
            a, Q = self._eig()
            self._inv_factor = (Q / a) @ Q.T
        return self._inv_factor

    @property
    def max_radius(self) -> float:
        return float(self.semi_axes.max())

    @property
    def log_volume(self) -> float:
        """Log of the volume divided by the unit-ball volume."""
        return float(np.log(self.semi_axes).sum())

    def form(self, Y) -> np.ndarray:
        U = np.atleast_2d(np.asarray(Y, dtype=float)) - self.center
        return np.einsum("mi,ij,mj->m", U, self.shape, U)

    def gauge(self, Y) -> np.ndarray:
        return np.sqrt(np.maximum(self.form(Y), 0.0))

    def scaled(self, s: float) -> "Ellipsoid":
        """Central scaling by ``s`` (semi-axes multiplied by ``s``)."""
        out = Ellipsoid(self.center, self.shape / (s * s), _check=False)
        if self._axes is not None:
            out._axes, out._dirs = self._axes * s, self._dirs
            if self._factor is not None:
                out._factor = self._factor * s
            if self._inv_factor is not None:
                out._inv_factor = self._inv_factor / s
        return out

    def recentered(self, c) -> "Ellipsoid":
        return Ellipsoid(c, self.shape)

    def sample_boundary(self, count: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.center + g @ self.factor.T

    def sample_interior(self, count: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = rng.uniform(size=count) ** (1.0 / self.dim)
        return self.center + (g * rad[:, None]) @ self.factor.T

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "shape": self.shape.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Ellipsoid":
        return cls(doc["center"], doc["shape"])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ellipsoid)
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.shape, other.shape)
        )

    def __repr__(self) -> str:
        return f"Ellipsoid(center={self.center.tolist()}, semi_axes={self.semi_axes.tolist()})"


def contains_point(E: Ellipsoid, y) -> bool:
    y = np.asarray(y, dtype=float)
    if y.shape != E.center.shape:
        raise UsageError("dimension mismatch")
    return bool(E.form(y)[0] <= 1.0 + TOL.ellipsoid)


def containment_ratio(L: np.ndarray, M: np.ndarray, t: float) -> float:
    """``lambda_max(L^T M L) / t**2``."""
    G = L.T @ M @ L
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[-1]) / (t * t)


def concentric_containment(E: Ellipsoid, M: np.ndarray, t: float, center=None) -> bool:
    """Whether ``E`` lies inside ``{y : (y-c)^T M (y-c) <= t**2}`` with c = E's center.

    Ties within the boundary band count as not contained.
    """
    if center is not None and not np.allclose(center, E.center, rtol=0, atol=TOL.abs):
        raise UsageError("constraint is not centered at the ellipsoid's center")
    return containment_ratio(E.factor, np.asarray(M, dtype=float), t) <= 1.0 - TOL.boundary_band


# -- inscribed ellipsoid ---------------------------------------------------


class InscribedInfo(NamedTuple):
    iterations: int
    gap: float  # final kappa/d - 1, bounds the log-volume loss by d/2 * log1p(gap)
    logdet_history: list
    method: str


def _merge_parallel(axes: np.ndarray, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep_ax: list[np.ndarray] = []
    keep_t: list[float] = []
    for a, t in sorted(zip(axes, ts), key=lambda p: p[1]):
        if any(abs(float(a @ b)) > 1.0 - 1e-12 for b in keep_ax):
            continue  # a parallel cylinder with a smaller radius is already kept
        keep_ax.append(a)
        keep_t.append(float(t))
    return np.array(keep_ax).reshape(-1, axes.shape[1]), np.array(keep_t)


def _orth_complement(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of unit vector v."""
    d = len(v)
    Q, _ = np.linalg.qr(np.column_stack([v, np.eye(d)]))
    return Q[:, 1:d]


def _polar_mvee(tb: float, axes: np.ndarray, ts: np.ndarray, tol: float, max_iter: int):
    """Frank-Wolfe with away steps on the polar minimum-volume ellipsoid.

    The polar of the ball is a ball of radius 1/tb, the polar of a cylinder
    is a (d-1)-disk of radius 1/t orthogonal to its axis. Returns the
    moment matrix X; the inscribed ellipsoid is ``{u : u^T (kappa X) u <= 1}``.
    """
    d = axes.shape[1]
    B = np.stack([_orth_complement(a) for a in axes]) / ts[:, None, None]  # (k, d, d-1)
    atoms = np.eye(d) / tb
    mu = np.full(d, 1.0 / d)
    X = np.eye(d) / (d * tb * tb)
    history = []
    best = None
    it = 0
    gap = math.inf
    for it in range(1, max_iter + 1):
        wx, Q = np.linalg.eigh(0.5 * (X + X.T))
        Xi = (Q / wx) @ Q.T
        kap, y = 1.0 / (wx[0] * tb * tb), Q[:, 0] / tb
        G = np.einsum("kia,ij,kjb->kab", B, Xi, B)
        wk, Qk = np.linalg.eigh(G)
        c = int(np.argmax(wk[:, -1]))
        if wk[c, -1] > kap:
            kap, y = float(wk[c, -1]), B[c] @ Qk[c, :, -1]
        # primal candidate A = kap X is feasible by construction
        logdet = -(d * math.log(kap) + float(np.log(wx).sum()))  # log det of L L^T
        if best is None or logdet > best[0]:
            best = (logdet, kap * X)
        history.append(best[0])
        gap = kap / d - 1.0
        if gap <= tol:
            break
        vals = np.einsum("mi,ij,mj->m", atoms, Xi, atoms)
        ja = int(np.argmin(vals))
        kmin = float(vals[ja])
        if kap - d >= d - kmin or mu[ja] <= 0.0:
            tau = (kap / d - 1.0) / (kap - 1.0)
            mu *= 1.0 - tau
            X = (1.0 - tau) * X + tau * np.outer(y, y)
            yy = y @ y
            same = np.flatnonzero(
                (np.abs(np.abs(atoms @ y) - yy) <= 1e-12 * yy) & (np.abs((atoms * atoms).sum(1) - yy) <= 1e-12 * yy)
            )
            if len(same):
                mu[same[0]] += tau
            else:
                atoms = np.vstack([atoms, y])
                mu = np.append(mu, tau)
        else:
            a = atoms[ja]
            s = (d - kmin) / (kmin * (d - 1.0))
            tau_max = mu[ja] / (1.0 - mu[ja]) if mu[ja] < 1.0 else math.inf
            tau = min(s / (1.0 - s) if s < 1.0 else tau_max, tau_max)
            X = (1.0 + tau) * X - tau * np.outer(a, a)
            mu *= 1.0 + tau
            mu[ja] -= tau
            if mu[ja] <= 1e-15:
                atoms = np.delete(atoms, ja, axis=0)
                mu = np.delete(mu, ja)
    return best[1], it, gap, history


def _certify(L: np.ndarray, Ms: np.ndarray, ts: np.ndarray) -> np.ndarray:
    G = np.einsum("ji,njk,kl->nil", L, Ms, L)
    ratios = np.linalg.eigvalsh(G)[:, -1] / ts**2
    rho = float(ratios.max())
    return L * math.sqrt((1.0 - 2.0 * TOL.boundary_band) / rho)


def inscribed_factor(C: Capsule, tol: float = 1e-9, max_iter: int = 500) -> tuple[np.ndarray, InscribedInfo]:
    """Factor ``L`` of a large ellipsoid ``{x + L u}`` inside the unscaled capsule."""
    R = C.reduced()
    d = C.dim
    if (R.thresholds <= 0).any():
        raise UsageError("capsule is degenerate (zero threshold)")
    tb = float(R.thresholds[0])
    axes, ts = _merge_parallel(R.axes[R.is_cyl], R.thresholds[R.is_cyl])
    Ms = R.matrices()
    # blended initializer: sum of constraint forms, feasible since each form >= 0
    A0 = np.einsum("nij,n->ij", Ms, 1.0 / R.thresholds**2)
    w0, Q0 = np.linalg.eigh(A0)
    L0 = (Q0 / np.sqrt(w0)) @ Q0.T
    if len(ts) == 0:
        L = np.eye(d) * tb
        info = InscribedInfo(0, 0.0, [float(d * 2 * math.log(tb))], "ball")
    elif len(ts) == 1:
        v = axes[0]
        vv = np.outer(v, v)
        L = ts[0] * (np.eye(d) - vv) + tb * vv
        info = InscribedInfo(0, 0.0, [float(2 * math.log(tb) + 2 * (d - 1) * math.log(ts[0]))], "cylinder")
    else:
        A, it, gap, hist = _polar_mvee(tb, axes, ts, tol, max_iter)
        w, Q = np.linalg.eigh(0.5 * (A + A.T))
        L = (Q / np.sqrt(w)) @ Q.T
        info = InscribedInfo(it, gap, hist, "frank-wolfe")
    L = _certify(L, Ms, R.thresholds)
    L0 = _certify(L0, Ms, R.thresholds)
    if np.linalg.slogdet(L0)[1] > np.linalg.slogdet(L)[1]:
        L = L0
    return L, info


def inscribed_ellipsoid(C: Capsule, lam: float = 1.0, **kw) -> Ellipsoid:
    """A certified concentric ellipsoid inside ``C^lam``.

    Computed once for the unscaled capsule and scaled by ``lam``, so the
    result for any ``lam`` is the ``lam = 1`` result scaled exactly.
    """
    if not lam > 0:
        raise UsageError("scale must be positive")
    L, _ = inscribed_factor(C, **kw)
    return Ellipsoid.from_factor(C.center, L).scaled(lam)


def proxy_pair(S: SegmentSet, x, r: float, consts: ScaleConstants) -> tuple[Ellipsoid, Ellipsoid]:
    """Covering proxy ``E'`` and packing proxy ``E''`` (same shape, smaller)."""
    base = inscribed_ellipsoid(build_capsule(S, x, r))
    return base.scaled(consts.lam_outer), base.scaled(consts.lam_inner)


# -- disjointness ----------------------------------------------------------


def separation_value(E1: Ellipsoid, E2: Ellipsoid, target: float = math.inf) -> float:
    """``max_s min_y (1-s) q1(y) + s q2(y)``; the ellipsoids are disjoint iff > 1.

    With W_i the inverse shapes, the inner minimum equals
    ``delta^T [W1/(1-s) + W2/s]^{-1} delta`` which after simultaneous
    diagonalisation is ``sum_k z_k^2 s (1-s) / (s + w_k (1-s))``, a concave
    function of s. Stops early once the value exceeds ``target``.
    """
    if E1.dim != E2.dim:
        raise UsageError("ellipsoids live in different dimensions")
    delta = E2.center - E1.center
    R = E1.factor  # W1 = R R^T
    Ri = E1.inv_factor
    Wt = Ri @ (E2.factor @ E2.factor.T) @ Ri.T
    w, Q = np.linalg.eigh(0.5 * (Wt + Wt.T))
    w = np.maximum(w, 0.0)
    z2 = (Q.T @ (Ri @ delta)) ** 2

    def f(s):
        s = np.asarray(s)[:, None]
        return (z2 * s * (1 - s) / (s + w * (1 - s))).sum(axis=1)

    lo, hi = 0.0, 1.0
    best = 0.0
    for _ in range(4):
        grid = np.linspace(lo, hi, 33)[1:-1] if lo == 0.0 and hi == 1.0 else np.linspace(lo, hi, 33)
        vals = f(grid)
        k = int(np.argmax(vals))
        best = max(best, float(vals[k]))
        if best > target:
            break
        step = grid[1] - grid[0]
        lo, hi = max(grid[k] - step, 1e-300), min(grid[k] + step, 1.0 - 1e-16)
    return best


def ellipsoids_disjoint(E1: Ellipsoid, E2: Ellipsoid) -> bool:
    """Closed ellipsoids share no point. Touching counts as not disjoint."""
    dist = float(np.linalg.norm(E1.center - E2.center))
    if dist > (E1.max_radius + E2.max_radius) * (1.0 + 1e-9):
        return True
    if E1.form(E2.center)[0] <= 1.0 or E2.form(E1.center)[0] <= 1.0:
        return False
    delta = E2.center - E1.center
    u = delta / dist
    if np.linalg.norm(E1.factor @ u) + np.linalg.norm(E2.factor @ u) < dist * (1.0 - 1e-9):
        return True
    # E1's boundary point toward E2's center
    if E2.form(E1.center + delta / E1.gauge(E2.center)[0])[0] <= 1.0:
        return False
    # any sampled value of the concave dual is a lower bound, so one side suffices
    return separation_value(E1, E2, 1.0 + TOL.boundary_band) > 1.0 + TOL.boundary_band


def ellipsoids_overlap(E1: Ellipsoid, E2: Ellipsoid) -> bool:
    return not ellipsoids_disjoint(E1, E2)


def john_factor(E: Ellipsoid, C: Capsule, lam: float, rng: np.random.Generator, count: int = 4000) -> float:
    """Measured ``kappa`` with ``C^lam`` inside ``E`` scaled by ``sqrt(d) * kappa``.

    ``E`` is the inscribed ellipsoid of ``C^lam``; the maximum of E's gauge
    over sampled boundary points of ``C^lam`` estimates the scaling.
    """
    from .capsules import sample_boundary

    Z = sample_boundary(C, count, rng, lam)
    return float(E.gauge(Z).max()) / math.sqrt(C.dim)
