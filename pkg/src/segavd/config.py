"""Numerical tolerances and scale constants shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass


class SegAvdError(Exception):
    """Base class for all errors raised by segavd."""


class UsageError(SegAvdError, ValueError):
    """Bad arguments: dimension mismatch, non-unit axis, unknown suite, ..."""


class InvalidInstanceError(SegAvdError, ValueError):
    """The segment set is not a valid instance (touching segments, NaNs, ...)."""


class NotDefinedError(SegAvdError, ValueError):
    """A quantity was requested where it is undefined (e.g. LFS with n < 2)."""


class SingularTensorError(SegAvdError, ValueError):
    """A local tensor was requested at a point lying on a segment."""


class GeneratorError(SegAvdError, RuntimeError):
    """Instance generation failed (infeasible parameters)."""


class ParseError(SegAvdError, ValueError):
    """A structure or instance file could not be parsed."""


@dataclass(frozen=True)
class Tolerances:
    abs: float = 1e-9
    rel_membership: float = 1e-12
    eig: float = 1e-11
    # |p|, |v| unit tests
    unit: float = 1e-12
    # relative cross-term determinant below which segments count as parallel
    parallel: float = 1e-12
    # ellipsoid membership slack
    ellipsoid: float = 1e-12
    # decisions within this relative band resolve toward "not contained"
    boundary_band: float = 1e-9


TOL = Tolerances()


def expansion_factor(lam: float) -> float:
    """Expansion-containment factor ``(3 + lam) / (1 - lam)``."""
    if not 0.0 < lam < 1.0:
        raise UsageError(f"scale factor must lie in (0, 1), got {lam}")
    return (3.0 + lam) / (1.0 - lam)


def lfs_expansion_factor(lam: float) -> float:
    """Expansion factor when each capsule uses its own local feature size."""
    if not 0.0 < lam < 1.0:
        raise UsageError(f"scale factor must lie in (0, 1), got {lam}")
    return (3.0 + lam) * (1.0 + lam) / (1.0 - lam) ** 2


@dataclass(frozen=True)
class ScaleConstants:
    """Proxy scale factors.

    ``lam_outer`` scales the covering ellipsoids, ``lam_inner`` the packing
    ones. By default ``lam_inner = lam_outer * sqrt(d) / alpha`` with alpha the
    expansion factor at ``lam_outer``.
    """

    dim: int
    lam_outer: float = 0.5
    lam_inner: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise UsageError("dimension must be positive")
        alpha = expansion_factor(self.lam_outer)
        if self.lam_inner is None:
            object.__setattr__(self, "lam_inner", self.lam_outer * math.sqrt(self.dim) / alpha)
        if not 0.0 < self.lam_inner < self.lam_outer < 1.0:
            raise UsageError(
                f"need 0 < lam_inner < lam_outer < 1, got {self.lam_inner}, {self.lam_outer}"
            )

    @property
    def alpha(self) -> float:
        return expansion_factor(self.lam_outer)

    @property
    def beta_lfs(self) -> float:
        return lfs_expansion_factor(self.lam_outer)

    def refinement_target(self, eps: float) -> float:
        """Scale below which a refined basic leaf becomes final."""
        return min(eps, 1.0) * (1.0 - self.lam_outer) / (3.0 * self.lam_outer)

    def refinement_depth(self, eps: float) -> int:
        """Smallest j with ``2**-j <= refinement_target(eps)``."""
        target = self.refinement_target(eps)
        j = 0
        while 2.0 ** (-j) > target:
            j += 1
        return j
