import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adauction.pricing import vcg_outcome
from adauction.rank import (
    crb_allocation,
    crb_outcome,
    crb_thresholds,
    example2_analytics,
    google_vector,
    optimize_rank_vector,
    rank_order,
    rb_outcome,
    rb_sample_metrics,
)

from conftest import SMALL_C, TABLE_C, sorted_rows

V = np.array([0.6, 0.5])


def test_rb_small_example():
    out = rb_outcome(SMALL_C, V, np.ones(2))
    assert out.matching.slot_to_bidder == (0, 1)
    assert out.prices.p[0, 0] == pytest.approx(0.4)
    assert out.prices.p[1, 1] == pytest.approx(0.0)


def test_rb_huge_weight_ranks_first():
    out = rb_outcome(TABLE_C, np.full(6, 5.0), np.array([1, 1, 1, 1e6, 1, 1.0]))
    assert out.matching.slot_to_bidder[0] == 3


def test_rb_ties_go_to_lower_index():
    assert list(rank_order([2.0, 3.0, 3.0, 1.0])) == [1, 2, 0, 3]
    assert rb_outcome(SMALL_C, [0.5, 0.5], np.ones(2)).matching.slot_to_bidder == (0, 1)


def test_rb_rejects_bad_weights():
    with pytest.raises(ValueError):
        rb_outcome(SMALL_C, V, np.array([1.0, 0.0]))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 4))
def test_rb_vectorized_matches_single(seed, n, m):
    m = min(m, n)
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, n, m)
    Vs = rng.uniform(0.0, 10.0, (4, n))
    w = rng.uniform(0.5, 2.0, n)
    met = rb_sample_metrics(c, Vs, w)
    for s in range(4):
        out = rb_outcome(c, Vs[s], w)
        assert met.revenue[s] == pytest.approx(out.revenue, abs=1e-9)
        assert np.allclose(met.payments[s], out.payments.T, atol=1e-9)


def test_google_vector():
    assert np.allclose(google_vector(TABLE_C), TABLE_C[:, 0] / 96.0)


def test_crb_small_example():
    out = crb_outcome(SMALL_C, V)
    assert out.matching.slot_to_bidder == (0, 1)
    assert np.allclose(out.extra["thresholds"][0], [0.5, 0.0])
    assert out.prices.p[0, 0] == pytest.approx(0.4)


def test_crb_zero_bidder_never_outranks():
    z = np.array([0.0, 1.0, 2.0])
    c = np.array([[9.0, 8.0], [1.0, 1.0], [1.0, 1.0]])
    m = crb_allocation(c, z)
    assert 0 not in m.slot_to_bidder


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4))
def test_crb_equals_vcg_on_separable(seed, n, m):
    m = min(m, n)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.2, 2.0, n)
    mu = -np.sort(-rng.uniform(1.0, 10.0, m))
    v = rng.uniform(0.1, 10.0, n)
    c = np.outer(phi, mu)
    crb = crb_outcome(c, v)
    vcg = vcg_outcome(c, v)
    assert crb.matching == vcg.matching
    assert np.allclose(crb.payments.T, vcg.payments.T, atol=1e-9)
    # separable CRB ranks like the Google vector
    rb = rb_outcome(c, v, google_vector(c))
    assert rb.matching == crb.matching


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4))
def test_crb_thresholds_ordered_and_prices_nonnegative(seed, n, m):
    m = min(m, n)
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, n, m)
    z = rng.uniform(0.0, 5.0, n)
    for i in range(n):
        a = crb_thresholds(c, z, i)
        assert np.all(np.diff(a) <= 0)
    out = crb_outcome(c, z)
    assert np.all(out.prices.p >= -1e-12)


def test_example2_values():
    ea = example2_analytics(SMALL_C)
    assert ea.A == 40 and ea.B == 10
    assert ea.alpha_star == pytest.approx(0.8125)
    assert ea.alpha_eff == pytest.approx(0.25)
    assert ea.revenue(1.0) == pytest.approx(50.0 / 6.0)
    assert ea.revenue(ea.alpha_star) > ea.revenue(ea.alpha_eff)
    assert ea.efficiency(ea.alpha_eff) > ea.efficiency(ea.alpha_star)
    with pytest.raises(ValueError):
        example2_analytics(TABLE_C)


def test_example2_branch_for_b_above_a():
    ea = example2_analytics(np.array([[50.0, 40.0], [50.0, 10.0]]))
    assert ea.alpha_star == pytest.approx(4 * 40 / (10 + 3 * 40))


def test_example2_monte_carlo_matches_closed_forms():
    ea = example2_analytics(SMALL_C)
    Vs = np.random.default_rng(3).uniform(size=(100000, 2))
    for a in np.linspace(0.2, 2.5, 10):
        met = rb_sample_metrics(SMALL_C, Vs, np.array([1.0, a]))
        se = met.revenue.std(ddof=1) / np.sqrt(len(Vs))
        assert abs(met.revenue.mean() - ea.revenue(a)) < 3 * se + 1e-9
        se_e = met.efficiency.std(ddof=1) / np.sqrt(len(Vs))
        assert abs(met.efficiency.mean() - ea.efficiency(a)) < 3 * se_e + 1e-9


def test_optimizer_recovers_example2_optima():
    Vs = np.random.default_rng(11).uniform(size=(100000, 2))
    rev = optimize_rank_vector(SMALL_C, Vs, "revenue")
    eff = optimize_rank_vector(SMALL_C, Vs, "efficiency")
    assert rev.w[0] == 1.0
    assert abs(rev.w[1] - 0.8125) <= 0.05
    assert abs(eff.w[1] - 0.25) <= 0.05


def test_symmetric_bidders_stationary_at_one():
    c = np.array([[50.0, 10.0], [50.0, 10.0]])
    ea = example2_analytics(c)
    assert ea.alpha_star == pytest.approx(1.0)
    h = 1e-4
    assert ea.revenue(1.0) >= ea.revenue(1.0 - h) and ea.revenue(1.0) >= ea.revenue(1.0 + h)


def test_optimizer_degenerate_and_invalid():
    res = optimize_rank_vector(SMALL_C, np.full((5, 2), 0.3))
    assert np.array_equal(res.w, np.ones(2))
    with pytest.raises(ValueError):
        optimize_rank_vector(SMALL_C, np.ones((3, 2)), "profit")
    with pytest.raises(ValueError):
        optimize_rank_vector([[1.0]], np.ones((3, 1)))
