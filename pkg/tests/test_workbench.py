import json
import math

import numpy as np
import pytest

from segavd.config import GeneratorError, UsageError
from segavd.geometry import SegmentSet
from segavd.workbench import (
    SUITES,
    SuiteResult,
    brute_force_nn,
    gen_griddle,
    gen_random,
    griddle_delta_bound,
    report_json,
    run_bench,
    run_validation,
    two_parallel,
    verify_griddle,
)


def test_brute_force_oracle():
    S = two_parallel()
    assert brute_force_nn(S, np.array([5.0, 0.5])) == (0, 0.5)
    assert brute_force_nn(S, np.array([5.0, 1.0]))[0] == 0  # tie goes to the lower id
    assert brute_force_nn(S, np.array([12.0, 2.0])) == (1, 2.0)


# -- random instances --------------------------------------------------------


def test_gen_random_is_deterministic():
    a = gen_random(10, 3, 42, 0.01)
    b = gen_random(10, 3, 42, 0.01)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)
    c = gen_random(10, 3, 43, 0.01)
    assert not np.array_equal(a.A, c.A)


@pytest.mark.parametrize("n,d", [(1, 2), (5, 2), (20, 3), (50, 2)])
def test_gen_random_respects_gap_and_cube(n, d):
    S = gen_random(n, d, 7, 0.01)
    assert S.n == n and S.dim == d
    P = S.endpoints()
    assert (P >= 0).all() and (P <= 1).all()
    assert (S.lengths > 0).all()
    if n > 1:
        assert S.min_gap >= 0.01


def test_gen_random_spread_band():
    S = gen_random(5, 2, 3, 0.01, spread_band=(5.0, 40.0))
    assert 5.0 <= S.spread <= 40.0


def test_gen_random_errors():
    with pytest.raises(GeneratorError):
        gen_random(3, 2, 0, 2.0)
    with pytest.raises(GeneratorError):
        gen_random(40, 2, 0, 0.3, max_rejections=200)
    with pytest.raises(UsageError):
        gen_random(0, 2, 0, 0.1)
    with pytest.raises(UsageError):
        gen_random(3, 2, 0, 0.0)


# -- griddle -------------------------------------------------------------------


def test_griddle_layout():
    G = gen_griddle(3, 1.0, 0.2)
    S = G.segments
    assert S.n == 8 and S.dim == 3
    assert np.allclose(S.A[0], [0, 0, 0]) and np.allclose(S.B[0], [0, 3, 0])
    assert np.allclose(S.A[4], [0, 0, 0.2]) and np.allclose(S.B[4], [3, 0, 0.2])
    assert len(G.odd_points()) == 4 * 3
    assert S.min_gap == pytest.approx(0.2)


@pytest.mark.parametrize("n,eps,delta", [(4, 1.0, 0.2), (8, 1.0, 0.2), (5, 0.5, 0.3), (3, 0.1, 0.45)])
def test_griddle_verifies(n, eps, delta):
    rep = verify_griddle(gen_griddle(n, eps, delta))
    assert rep.ok, rep.failures[:3]
    assert rep.witness_count == (n + 1) * n
    assert rep.min_other_distance == pytest.approx(0.5)
    assert rep.min_other_ratio > 1 + eps


def test_griddle_delta_bound():
    assert griddle_delta_bound(1.0) == 0.25
    with pytest.raises(UsageError):
        gen_griddle(4, 1.0, 0.25)
    with pytest.raises(UsageError):
        gen_griddle(4, 1.0, 0.0)
    assert gen_griddle(4, 1.0).delta < 0.25


def test_griddle_fails_past_the_bound():
    # just above the bound the other segments become valid answers
    G = gen_griddle(3, 1.0, 0.2)
    G.delta = 0.26
    G.segments = SegmentSet(
        np.where(np.isclose(G.segments.A[:, 2], 0.2)[:, None], G.segments.A + [0, 0, 0.06], G.segments.A),
        np.where(np.isclose(G.segments.B[:, 2], 0.2)[:, None], G.segments.B + [0, 0, 0.06], G.segments.B),
    )
    G.query_points[..., 2] = 0.26
    assert not verify_griddle(G).ok


# -- suites ----------------------------------------------------------------------


def test_suite_result_bookkeeping():
    r = SuiteResult("x")
    assert not r.passed  # nothing checked yet
    r.record(np.array([-1.0, -0.5]))
    assert r.passed and r.checks == 2
    r.record(np.array([0.25, -1.0]))
    assert not r.passed and r.violations == 1 and r.max_violation == 0.25


def test_unknown_suite():
    with pytest.raises(UsageError):
        run_validation(["nope"])


@pytest.mark.parametrize("name", sorted(set(SUITES) - {"packing", "coverage", "correctness", "lemma8"}))
def test_cheap_suites_pass(name):
    rep = run_validation([name], seed=1, configs=10, samples=100, pairs=50, volume_samples=20_000)
    (res,) = rep.results
    assert res.passed, res.to_json()


def test_structure_suites_pass():
    rep = run_validation(["packing", "coverage", "correctness"], seed=2, samples=200, queries=300)
    assert rep.passed, rep.to_json()
    assert [r.name for r in rep.results] == ["correctness", "coverage", "packing"]


def test_volume_suite_passes():
    rep = run_validation(["lemma8"], seed=3, configs=6, volume_samples=100_000)
    assert rep.passed, rep.to_json()


def test_validation_is_reproducible():
    a = run_validation(["lipschitz", "lemma2"], seed=5, configs=5, pairs=20)
    b = run_validation(["lemma2", "lipschitz"], seed=5, configs=5, pairs=20)
    assert a.to_json() == b.to_json()
    assert "lipschitz" in a.to_text()


# -- bench -------------------------------------------------------------------------


def test_bench_without_timing_is_pure():
    fx = [("pair", two_parallel())]
    a = run_bench(fx, [1.0], queries=200, seed=4, timing=False)
    b = run_bench(fx, [1.0], queries=200, seed=4, timing=False)
    assert report_json(a.to_json()) == report_json(b.to_json())
    (row,) = a.rows
    assert row.correct_rate == 1.0 and row.build_seconds is None
    assert a.to_csv().splitlines()[0].startswith("fixture,n,dim,epsilon")
    assert json.loads(report_json(a.to_json()))["rows"][0]["fixture"] == "pair"


def test_bench_timing_fields():
    rep = run_bench([("pair", two_parallel())], [1.0], queries=50, seed=0)
    row = rep.rows[0]
    assert row.build_seconds > 0 and row.query_p99_us >= row.query_p50_us > 0
    assert math.isfinite(row.query_mean_us)
    assert "pair" in rep.to_text()
