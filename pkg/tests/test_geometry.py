import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segavd.config import InvalidInstanceError, NotDefinedError, ParseError, UsageError
from segavd.geometry import (
    Segment,
    SegmentSet,
    dist_point_segment,
    dist_segment_segment,
    domain_ball,
    instance_from_dict,
    instance_stats,
    instance_to_dict,
    load_instance,
    local_feature_size,
    project_onto_segment,
)
from segavd.workbench import gen_random, two_parallel


def seg(a, b):
    return Segment(np.array(a, float), np.array(b, float))


def sweep_point(q, s, step=1e-6):
    t = np.arange(0.0, 1.0 + step, step)
    P = s.a + t[:, None] * (s.b - s.a)
    return np.linalg.norm(P - q, axis=1).min()


def sweep_pair(s1, s2, step=1e-4):
    t = np.arange(0.0, 1.0 + step / 2, step)
    P = s1.a + t[:, None] * (s1.b - s1.a)
    Q = s2.a + t[:, None] * (s2.b - s2.a)
    best = math.inf
    for k in range(0, len(P), 500):
        D = np.linalg.norm(P[k : k + 500, None, :] - Q[None, :, :], axis=2)
        best = min(best, D.min())
    return best


# -- point to segment ------------------------------------------------------


def test_point_segment_interior_foot():
    p = project_onto_segment(np.array([0.0, 1.0]), seg((-1, 0), (1, 0)))
    assert p.distance == pytest.approx(1.0, abs=1e-15)
    assert p.interior


def test_point_segment_endpoint_case():
    p = project_onto_segment(np.array([2.0, 0.0]), seg((-1, 0), (1, 0)))
    assert p.distance == pytest.approx(1.0, abs=1e-15)
    assert not p.interior


def test_point_segment_matches_sweep_oracle():
    s = seg((0, 0), (0, 1))
    q = np.array([3.0, 4.0])
    frozen = 4.242640687119285  # sweep oracle, step 1e-6
    assert abs(sweep_point(q, s) - frozen) < 1e-9
    assert dist_point_segment(q, s) == pytest.approx(frozen, abs=1e-9)


def test_point_segment_dimension_mismatch():
    with pytest.raises(UsageError):
        dist_point_segment(np.zeros(3), seg((0, 0), (1, 0)))


def test_distance_zero_exactly_on_segment():
    s = seg((0, 0, 0), (1, 2, 3))
    assert dist_point_segment(s.a + 0.3 * (s.b - s.a), s) <= 1e-12
    assert dist_point_segment(np.array([0.5, 0.5, 0.5]), s) > 1e-12


# -- segment to segment ------------------------------------------------------


@pytest.mark.parametrize(
    "a1,b1,a2,b2,expect",
    [
        ((0, 0), (1, 0), (0, 1), (1, 1), 1.0),
        ((0, 0), (1, 0), (2, 0), (3, 0), 1.0),
        ((0, 0, 0), (1, 0, 0), (0, 0, 1), (0, 1, 1), 1.0),
    ],
)
def test_segment_segment_examples(a1, b1, a2, b2, expect):
    s1, s2 = seg(a1, b1), seg(a2, b2)
    assert dist_segment_segment(s1, s2) == pytest.approx(expect, abs=1e-12)
    assert dist_segment_segment(s2, s1) == pytest.approx(expect, abs=1e-12)


def test_segment_segment_against_grid_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        d = int(rng.integers(2, 4))
        s1 = seg(rng.uniform(-1, 1, d), rng.uniform(-1, 1, d))
        s2 = seg(rng.uniform(-1, 1, d), rng.uniform(-1, 1, d))
        exact = dist_segment_segment(s1, s2)
        assert exact <= sweep_pair(s1, s2, 2e-3) + 1e-12
        assert abs(exact - dist_segment_segment(s2, s1)) < 1e-12


def test_segment_segment_grid_oracle_fine():
    rng = np.random.default_rng(3)
    for _ in range(3):
        s1 = seg(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        s2 = seg(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        # the grid minimum overshoots by at most the squared step scale
        assert abs(dist_segment_segment(s1, s2) - sweep_pair(s1, s2)) < 1e-6 + 4e-4


def test_near_parallel_segments():
    s1 = seg((0, 0), (1, 0))
    s2 = seg((0.5, 1e-3), (1.5, 1e-3 + 1e-14))
    assert dist_segment_segment(s1, s2) == pytest.approx(1e-3, rel=1e-9)


# -- local feature size --------------------------------------------------------


def test_lfs_two_parallel():
    S = two_parallel()
    assert local_feature_size(np.array([5.0, 0.5]), S).phi == pytest.approx(1.5)
    lf = local_feature_size(np.array([5.0, 1.0]), S)
    assert lf.phi == pytest.approx(1.0)
    assert (lf.nearest, lf.second) == (0, 1)


def test_lfs_second_order_statistic():
    S = gen_random(3, 2, 11, 0.05)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-1, 2, 2)
        d = [dist_point_segment(x, s) for s in S]
        assert local_feature_size(x, S).phi == pytest.approx(sorted(d)[1], abs=1e-12)


def test_lfs_single_segment_not_defined():
    S = SegmentSet(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
    with pytest.raises(NotDefinedError):
        local_feature_size(np.array([0.0, 1.0]), S)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_lfs_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    S = gen_random(4, int(rng.integers(2, 4)), seed, 0.02)
    x, y = rng.uniform(-0.5, 1.5, (2, S.dim))
    fx = local_feature_size(x, S).phi
    fy = local_feature_size(y, S).phi
    assert abs(fx - fy) <= np.linalg.norm(x - y) + 1e-9


# -- instance statistics ---------------------------------------------------------


def test_stats_unit_square_pair():
    S = SegmentSet.from_list([[[0, 0], [1, 0]], [[0, 1], [1, 1]]])
    st_ = instance_stats(S)
    assert st_.diam == pytest.approx(math.sqrt(2))
    assert st_.min_gap == pytest.approx(1.0)
    assert st_.spread == pytest.approx(math.sqrt(2))


def test_stats_translated_copies():
    S = SegmentSet.from_list([[[0, 0], [1, 0]], [[0, 10], [1, 10]]])
    assert instance_stats(S).min_gap == pytest.approx(10.0)


def test_touching_segments_rejected():
    with pytest.raises(InvalidInstanceError):
        SegmentSet.from_list([[[0, 0], [1, 0]], [[1, 0], [1, 1]]])


def test_zero_length_rejected_unless_enabled():
    with pytest.raises(InvalidInstanceError):
        SegmentSet.from_list([[[0, 0], [0, 0]], [[0, 1], [1, 1]]])
    S = SegmentSet.from_list([[[0, 0], [0, 0]], [[0, 1], [1, 1]]], allow_degenerate=True)
    assert S.distances(np.array([0.0, -1.0]))[0] == pytest.approx(1.0)


def test_diam_from_endpoints_matches_dense_sampling():
    S = gen_random(6, 3, 5, 0.02)
    t = np.linspace(0, 1, 201)
    P = np.vstack([S.A[k] + t[:, None] * (S.B[k] - S.A[k]) for k in range(S.n)])
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    assert abs(D.max() - S.diam) < 1e-6


# -- domain ball -------------------------------------------------------------------


def test_domain_ball_examples():
    S = SegmentSet.from_list([[[0, 0], [10, 0]]])
    B = domain_ball(S, 2.0)
    assert np.allclose(B.center, [5, 0])
    assert B.inner_radius == pytest.approx(5.0)
    assert B.radius == pytest.approx(10.0)
    assert domain_ball(S, 0.1).radius == pytest.approx(21 * 5.0)


def test_domain_ball_contains_endpoints():
    S = gen_random(10, 3, 9, 0.01)
    B = domain_ball(S, 0.5)
    gaps = np.linalg.norm(S.endpoints() - B.center, axis=1)
    assert (gaps <= B.inner_radius * (1 + 1e-9)).all()
    assert B.radius == pytest.approx(5.0 * B.inner_radius)


def test_domain_ball_rejects_bad_eps():
    with pytest.raises(UsageError):
        domain_ball(two_parallel(), 0.0)


# -- instance files ------------------------------------------------------------------


def test_instance_round_trip(tmp_path):
    S = gen_random(5, 3, 1, 0.01)
    doc = instance_to_dict(S)
    S2 = instance_from_dict(doc)
    assert np.array_equal(S.A, S2.A) and np.array_equal(S.B, S2.B)


def test_instance_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2,\n "segments": [}')
    with pytest.raises(ParseError, match="line 2"):
        load_instance(bad)
    with pytest.raises(ParseError):
        instance_from_dict({"dim": 2, "segments": [[[0, 0, 0], [1, 1]]]})
    with pytest.raises(ParseError):
        instance_from_dict({"segments": []})
