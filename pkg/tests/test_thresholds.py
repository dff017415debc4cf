from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adauction.audit import audit_self_selection
from adauction.pricing import vcg_outcome
from adauction.priors import UniformPrior, clipped_virtual
from adauction.thresholds import (
    ClippedTransform,
    FunctionTransform,
    IdentityTransform,
    KnotTransform,
    bisection_thresholds_oracle,
    compute_prices,
    monotone_allocation,
    nominal_surplus_from_thresholds,
    optmatch_thresholds,
    prices_from_thresholds,
    slot_or_better,
    strip_prices,
    threshold_prices,
    threshold_prices_array,
)

from conftest import SMALL_C, ctr_and_values, sorted_rows


def test_optmatch_small_example():
    a = optmatch_thresholds(SMALL_C, 0, [0.5])
    assert a[0] == pytest.approx(0.125)
    assert a[1] == 0.0


def test_optmatch_no_competitors():
    assert list(optmatch_thresholds([[4.0]], 0, [])) == [0.0]


def test_optmatch_better_slot_dominates():
    # equal CTRs: the bidder always takes slot 0 when it wins, slot 1 is never reached
    c = np.array([[5.0, 5.0], [1.0, 1.0], [1.0, 1.0]])
    a = optmatch_thresholds(c, 0, [0.0, 0.0])
    assert a[0] == 0.0 and np.isinf(a[1])


def test_optmatch_input_validation():
    with pytest.raises(IndexError):
        optmatch_thresholds(SMALL_C, 3, [0.5])
    with pytest.raises(ValueError):
        optmatch_thresholds(SMALL_C, 0, [0.5, 0.1])
    with pytest.raises(ValueError):
        optmatch_thresholds(SMALL_C, 0, [-1.0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4))
def test_optmatch_equals_bisection_oracle(seed, n, m):
    m = min(m, n)
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, n, m)
    z = rng.uniform(0.0, 10.0, n)
    i0 = int(rng.integers(n))
    zm = np.delete(z, i0)
    fast = slot_or_better(optmatch_thresholds(c, i0, zm))
    slow = bisection_thresholds_oracle(c, i0, zm)
    assert np.allclose(fast, slow, atol=1e-9, rtol=0) or np.all(
        (np.isinf(fast) & np.isinf(slow)) | (np.abs(fast - slow) <= 1e-9)
    )


def test_compute_prices_small_example():
    out = compute_prices(SMALL_C, [0.6, 0.5])
    assert np.allclose(out.thresholds[0], [0.125, 0.0])
    assert out.prices.p[0, 0] == pytest.approx(0.1)
    assert out.matching.slot_to_bidder == (0, 1)


def test_compute_prices_uniform_reserve():
    psi = clipped_virtual(UniformPrior(0.0, 1.0))
    out = compute_prices([[1.0]], [0.8], [psi])
    assert out.thresholds[0, 0] == pytest.approx(0.5)
    assert out.prices.p[0, 0] == pytest.approx(0.5)
    assert out.payments.T[0] == pytest.approx(0.5)
    low = compute_prices([[1.0]], [0.3], [psi])
    assert low.matching.slot_to_bidder == (None,)


@given(ctr_and_values(max_n=5, max_m=3))
def test_identity_prices_equal_vcg(cv):
    c, v = cv
    out = compute_prices(c, v)
    ref = vcg_outcome(c, v)
    assert out.matching == ref.matching
    for j, i in enumerate(out.matching.slot_to_bidder):
        assert out.prices.p[i, j] == pytest.approx(ref.prices.p[i, j], abs=1e-9)


@given(ctr_and_values(max_n=5, max_m=3))
def test_self_selection_at_computed_prices(cv):
    c, v = cv
    out = compute_prices(c, v)
    for i in range(c.shape[0]):
        assert audit_self_selection(out.prices.p[i], c[i], v[i], out.matching.slot_of(i))


@given(st.integers(0, 2**32 - 1))
def test_total_clicks_monotone_in_value(seed):
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, 4, 3)
    v = rng.uniform(0.0, 10.0, 4)
    prev = -1.0
    for x in np.linspace(0.0, 15.0, 61):
        v[0] = x
        m = monotone_allocation(c, v)
        j = m.slot_of(0)
        clicks = 0.0 if j is None else c[0, j]
        assert clicks >= prev - 1e-12
        prev = clicks


def test_prices_from_thresholds_examples():
    c = np.array([[50.0, 10.0]])
    assert np.allclose(prices_from_thresholds(c, [[0.125, 0.0]]).p, [[0.1, 0.0]])
    assert np.allclose(prices_from_thresholds(c, [[0.0, 0.0]]).p, 0.0)
    assert prices_from_thresholds([[3.0]], [[0.7]]).p[0, 0] == pytest.approx(0.7)


def test_prices_from_thresholds_rejects_unordered():
    with pytest.raises(ValueError):
        prices_from_thresholds([[5.0, 1.0]], [[0.1, 0.2]])


def test_infinite_threshold_gives_infinite_price():
    p = prices_from_thresholds([[5.0, 1.0]], [[np.inf, 0.3]]).p
    assert np.isinf(p[0, 0]) and p[0, 1] == pytest.approx(0.3)


@given(
    st.lists(st.integers(1, 50), min_size=1, max_size=5),
    st.lists(st.fractions(min_value=0, max_value=20), min_size=5, max_size=5),
)
def test_step_and_strip_prices_exactly_equal(ctrs, thr):
    c = sorted((Fraction(x) for x in ctrs), reverse=True)
    a = sorted(thr[: len(c)], reverse=True)
    assert threshold_prices(c, a) == strip_prices(c, a)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_vectorized_prices_match_scalar(seed, n, m):
    m = min(m, n)
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, n, m)
    a = -np.sort(-rng.uniform(0.0, 5.0, (3, n, m)), axis=-1)
    vec = threshold_prices_array(c, a)
    for s in range(3):
        assert np.allclose(vec[s], prices_from_thresholds(c, a[s]).p, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_nominal_surplus_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    c = sorted_rows(rng, 1, 3)[0]
    a = -np.sort(-rng.uniform(0.0, 5.0, 3))
    v = rng.uniform(0.0, 6.0)
    grid = np.linspace(0.0, v, 20001)

    def clicks(u):
        won = np.nonzero(u > a)[0]
        return c[won[0]] if won.size else 0.0

    vals = np.array([clicks(u) for u in grid])
    quad = np.trapezoid(vals, grid) if hasattr(np, "trapezoid") else np.trapz(vals, grid)
    assert nominal_surplus_from_thresholds(c, a, v) == pytest.approx(quad, abs=1e-2)


def test_transforms_invert_right_continuously():
    ident = IdentityTransform()
    assert ident.inverse(2.5) == 2.5
    clipped = ClippedTransform(FunctionTransform(lambda x: 2 * x - 1, 0.0, 1.0))
    assert clipped.forward(0.2) == 0.0
    assert clipped.inverse(0.0) == pytest.approx(0.5)
    assert clipped.inverse(1.0) == pytest.approx(1.0)
    knot = KnotTransform([0.0, 1.0, 2.0], [0.0, 0.0, 2.0], 0.0)
    assert knot.inverse(0.0) == pytest.approx(1.0)  # right end of the flat piece
    assert knot.forward(3.0) == pytest.approx(3.0)  # slope-one tail


def test_compute_prices_rejects_negative_transform():
    with pytest.raises(ValueError):
        compute_prices([[1.0]], [0.2], [FunctionTransform(lambda x: 2 * x - 1, 0.0, 1.0)])


def test_growth_rate_smoke():
    import time

    rng = np.random.default_rng(0)

    def timed(n, m):
        c = sorted_rows(rng, n, m)
        v = rng.uniform(1.0, 10.0, n)
        t = time.perf_counter()
        compute_prices(c, v)
        return time.perf_counter() - t

    small = min(timed(6, 3) for _ in range(3))
    big = min(timed(12, 6) for _ in range(3))
    # n^2 m^2 grows 16x; allow generous slack for solver overheads
    assert big / small < 16 * 8
