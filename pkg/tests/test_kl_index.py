import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratebandit.kl_index import (bernoulli_kl, exploration_threshold, kl_ucb_index,
                                 pinsker_bounds)

from oracles import grid_scan_index, kl_closed_form, kl_quadrature, threshold_ref

prob = st.floats(0.0, 1.0, allow_nan=False)


def test_kl_identity():
    assert bernoulli_kl(0.5, 0.5) == 0.0


def test_kl_zero_mean_closed_form():
    assert bernoulli_kl(0.0, 0.5) == pytest.approx(math.log(2), abs=1e-12)


def test_kl_half_three_quarters():
    expected = 0.5 * math.log(4 / 3)
    assert bernoulli_kl(0.5, 0.75) == pytest.approx(expected, abs=1e-12)
    assert bernoulli_kl(0.5, 0.75) == pytest.approx(0.143841, abs=1e-6)
    assert kl_quadrature(0.5, 0.75) == pytest.approx(bernoulli_kl(0.5, 0.75), rel=1e-9)


def test_kl_singular_endpoints():
    assert bernoulli_kl(0.3, 0.0) == math.inf
    assert bernoulli_kl(0.3, 1.0) == math.inf
    assert bernoulli_kl(1.0, 1.0) == 0.0
    assert bernoulli_kl(1.0, 0.5) == pytest.approx(math.log(2))


@pytest.mark.parametrize("p,q", [(-0.1, 0.5), (0.5, 1.1), (math.nan, 0.5)])
def test_kl_domain_errors(p, q):
    with pytest.raises(ValueError):
        bernoulli_kl(p, q)


@given(prob, prob)
def test_kl_matches_closed_form(p, q):
    got = bernoulli_kl(p, q)
    ref = kl_closed_form(p, q)
    if math.isinf(ref):
        assert math.isinf(got)
    else:
        assert got == pytest.approx(max(ref, 0.0), rel=1e-12, abs=1e-15)


@given(st.floats(0.0, 0.98), st.floats(0.0, 1.0))
def test_kl_increasing_above_p(p, frac):
    q1 = p + (0.99 - p) * frac * 0.5
    q2 = p + (0.99 - p) * frac
    assert bernoulli_kl(p, q1) <= bernoulli_kl(p, q2) + 1e-15


def test_pinsker_examples():
    assert pinsker_bounds(0.5, 0.5) == (0.0, 0.0)
    lo, hi = pinsker_bounds(0.1, 0.6)
    assert lo == pytest.approx(0.5)
    assert hi == pytest.approx(0.25 / 0.24)
    assert lo <= bernoulli_kl(0.1, 0.6) <= hi
    lo, hi = pinsker_bounds(0.0, 0.5)
    assert (lo, hi) == pytest.approx((0.5, 1.0))
    assert lo <= math.log(2) <= hi


@pytest.mark.parametrize("p,q", [(0.6, 0.5), (0.2, 1.0), (-0.1, 0.2)])
def test_pinsker_domain(p, q):
    with pytest.raises(ValueError):
        pinsker_bounds(p, q)


def test_threshold_shape():
    assert exploration_threshold(1) == 0.0
    assert exploration_threshold(2) == 0.0
    for l in (3, 10, 1000, 1e6):
        assert exploration_threshold(l) == pytest.approx(threshold_ref(l), rel=1e-12)
        assert exploration_threshold(l) >= 0
    assert exploration_threshold(100, c=0) == pytest.approx(math.log(100))
    with pytest.raises(ValueError):
        exploration_threshold(10, c=-1)


def test_index_unsampled_and_saturated():
    assert kl_ucb_index(0.3, 0, 5.0, 1.0) == 1.0
    assert kl_ucb_index(1.0, 50, 2.0, 1.0) == 1.0
    assert kl_ucb_index(24.0, 10, 1.0, 24.0) == 24.0


def test_index_grid_example():
    thr = math.log(1000)
    q = kl_ucb_index(0.5, 100, thr, 1.0)
    assert 0.5 < q < 1.0
    assert abs(100 * bernoulli_kl(0.5, q) - thr) <= 1e-7
    assert abs(q - grid_scan_index(0.5, 100, thr)) <= 2e-6


def test_index_domain_errors():
    with pytest.raises(ValueError):
        kl_ucb_index(0.5, -1, 1.0, 1.0)
    with pytest.raises(ValueError):
        kl_ucb_index(1.5, 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        kl_ucb_index(0.5, 1, -1.0, 1.0)
    with pytest.raises(ValueError):
        kl_ucb_index(0.5, 1, 1.0, 0.0)


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(1, 10_000), st.floats(0, 30), st.floats(0, 30))
def test_index_monotone_in_threshold(m, s, a, b):
    lo, hi = sorted((a, b))
    assert kl_ucb_index(m, s, lo, 1.0) <= kl_ucb_index(m, s, hi, 1.0)


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(1, 10_000), st.integers(1, 10_000), st.floats(0, 30))
def test_index_monotone_in_samples(m, a, b, thr):
    lo, hi = sorted((a, b))
    assert kl_ucb_index(m, hi, thr, 1.0) <= kl_ucb_index(m, lo, thr, 1.0)


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(0, 5000), st.floats(0, 30), st.floats(0.1, 60))
def test_index_dominance_and_feasibility(m, s, thr, r):
    q = kl_ucb_index(m * r, s, thr, r)
    assert m * r <= q + 1e-12 <= r + 1e-12
    if s > 0 and q < r:
        assert s * bernoulli_kl((m * r) / r, q / r) <= thr + 1e-9


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(0, 5000), st.floats(0, 30), st.floats(0.1, 60),
       st.floats(0.01, 100))
def test_index_scaling(m, s, thr, r, lam):
    a = kl_ucb_index(lam * m * r, s, thr, lam * r)
    b = kl_ucb_index(m * r, s, thr, r)
    assert a == pytest.approx(lam * b, rel=1e-9, abs=3e-9 * lam * r)


def test_index_reaches_r_when_budget_is_large():
    # With an infinite-budget-like threshold the whole range is feasible.
    q = kl_ucb_index(0.4, 3, 1e9, 2.0)
    assert q == pytest.approx(2.0, abs=2e-9)


def test_bisection_vs_grid_scan_sample():
    rng = np.random.default_rng(11)
    for _ in range(40):
        m = rng.random()
        s = int(rng.integers(1, 2000))
        thr = rng.random() * 15
        assert abs(kl_ucb_index(m, s, thr, 1.0) - grid_scan_index(m, s, thr)) <= 2e-6
