import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segavd.capsules import Capsule, build_capsule
from segavd.config import ScaleConstants, UsageError
from segavd.ellipsoids import (
    Ellipsoid,
    concentric_containment,
    contains_point,
    ellipsoids_disjoint,
    inscribed_ellipsoid,
    inscribed_factor,
    john_factor,
    proxy_pair,
)
from segavd.geometry import SegmentSet
from segavd.workbench import gen_random

ONE = SegmentSet(np.array([[0.0, 0.0]]), np.array([[10.0, 0.0]]))


def ball_capsule(center, radius):
    c = np.asarray(center, float)
    return Capsule(c, radius, np.zeros((1, len(c))), [radius], [False], [0])


def test_contains_point_examples():
    E = Ellipsoid.ball(np.zeros(2), 1.0)
    assert contains_point(E, np.zeros(2))
    assert contains_point(E, np.array([1.0, 0.0]))
    F = Ellipsoid(np.array([5.0, 1.0]), np.diag([1 / 26, 1.0]))
    assert contains_point(F, np.array([5 + math.sqrt(26), 1.0]))
    assert not contains_point(F, np.array([5.0, 2.01]))


def test_concentric_containment_examples():
    c = np.zeros(2)
    assert concentric_containment(Ellipsoid.ball(c, 1.0), np.eye(2), 2.0)
    M = np.diag([0.0, 1.0])
    assert concentric_containment(Ellipsoid.from_factor(c, np.diag([3.0, 1.0])), M, 2.0)
    assert not concentric_containment(Ellipsoid.from_factor(c, np.diag([1.0, 3.0])), M, 2.0)
    with pytest.raises(UsageError):
        concentric_containment(Ellipsoid.ball(c, 1.0), np.eye(2), 2.0, center=np.ones(2))


def test_inscribed_ball_capsule():
    C = ball_capsule([1.0, 2.0, 3.0], 2.0)
    E = inscribed_ellipsoid(C, 0.5)
    assert np.allclose(E.semi_axes, 1.0, rtol=1e-8)
    assert np.allclose(inscribed_ellipsoid(ball_capsule([0, 0], 1.0), 0.5).semi_axes, 0.5, rtol=1e-8)


def test_inscribed_cylinder_and_ball():
    C = build_capsule(ONE, np.array([5.0, 3.0]), 1.0)
    E = inscribed_ellipsoid(C, 1.0)
    assert np.allclose(sorted(E.semi_axes), [3.0, math.sqrt(34)], rtol=1e-7)


def test_inscribed_matches_grid_search():
    # axis-aligned grid search over (a, b) inside the same capsule
    best = 0.0
    C = build_capsule(ONE, np.array([5.0, 3.0]), 1.0)
    for a in np.linspace(0.1, 6.0, 119):
        for b in np.linspace(0.1, 3.5, 69):
            L = np.diag([a, b])
            if all(np.linalg.eigvalsh(L @ M @ L)[-1] <= t * t for M, t in zip(C.matrices(), C.thresholds)):
                best = max(best, a * b)
    E = inscribed_ellipsoid(build_capsule(ONE, np.array([5.0, 3.0]), 1.0))
    assert np.prod(E.semi_axes) >= best * (1 - 1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_inscribed_is_certified_and_scales_exactly(seed):
    rng = np.random.default_rng(seed)
    S = gen_random(int(rng.integers(2, 7)), int(rng.integers(2, 4)), seed, 0.02)
    x = rng.uniform(-0.5, 1.5, S.dim)
    C = build_capsule(S, x, float(rng.uniform(0.0, 0.5)))
    lam = float(rng.uniform(0.1, 1.0))
    E = inscribed_ellipsoid(C, lam)
    for M, t in zip(C.matrices(), C.thresholds):
        assert concentric_containment(E, M, lam * t)
    E1 = inscribed_ellipsoid(C, 1.0)
    assert np.allclose(E.shape, E1.shape / lam**2, rtol=1e-12)
    # feasible initializer: the blended form ellipsoid never wins on volume
    A0 = np.einsum("nij,n->ij", C.matrices(), 1.0 / C.thresholds**2)
    assert np.linalg.slogdet(E1.shape)[1] <= np.linalg.slogdet(A0)[1] + 1e-9


def test_logdet_history_monotone():
    S = gen_random(6, 3, 3, 0.02)
    C = build_capsule(S, np.array([0.5, 0.5, 0.5]), 0.05)
    _, info = inscribed_factor(C)
    h = np.array(info.logdet_history)
    assert (np.diff(h) >= -1e-9).all()


def test_john_sandwich_factor():
    rng = np.random.default_rng(4)
    worst = 0.0
    for seed in range(30):
        S = gen_random(5, int(rng.integers(2, 4)), seed, 0.02)
        x = rng.uniform(0, 1, S.dim)
        C = build_capsule(S, x, float(np.sort(S.distances(x))[1]))
        E = inscribed_ellipsoid(C, 0.5)
        worst = max(worst, john_factor(E, C, 0.5, rng))
    assert worst <= 2.0


def test_proxy_pair():
    c = ScaleConstants(2)
    assert c.lam_inner == pytest.approx(0.10101525445522107)
    S = SegmentSet(np.array([[0.0, 0.0], [0.0, 10.0]]), np.array([[1.0, 0.0], [1.0, 10.0]]))
    x = np.array([-3.0, 0.0])
    Eo, Ei = proxy_pair(S, x, 0.5, c)
    assert np.allclose(Eo.semi_axes, 1.5, rtol=1e-8)
    assert np.allclose(Ei.semi_axes, 3 * math.sqrt(2) / 14, rtol=1e-8)
    # symmetric capsule above a long segment: axes along the coordinate axes
    Eo, _ = proxy_pair(ONE, np.array([5.0, 1.0]), 1.0, c)
    assert np.allclose(np.abs(Eo.directions), np.eye(2), atol=1e-8)


def test_disjoint_examples():
    a = Ellipsoid.ball(np.zeros(2), 1.0)
    assert ellipsoids_disjoint(a, Ellipsoid.ball(np.array([3.0, 0.0]), 1.0))
    assert not ellipsoids_disjoint(a, Ellipsoid.ball(np.zeros(2), 1.0))
    assert not ellipsoids_disjoint(a, Ellipsoid.ball(np.array([2.0, 0.0]), 1.0))
    assert ellipsoids_disjoint(a, Ellipsoid.ball(np.array([2.001, 0.0]), 1.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_disjoint_agrees_with_sampling(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))

    def rand_ell():
        L = rng.normal(size=(d, d)) + 2 * np.eye(d)
        return Ellipsoid.from_factor(rng.normal(size=d) * 2, L @ L.T / 4)

    E1, E2 = rand_ell(), rand_ell()
    verdict = ellipsoids_disjoint(E1, E2)
    assert verdict == ellipsoids_disjoint(E2, E1)
    if verdict:
        Z = E1.sample_interior(3000, rng)
        assert (E2.form(Z) > 1.0).all()
