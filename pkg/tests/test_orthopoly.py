import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from intertwine import orthopoly
from intertwine.orthopoly import (
    Binomial,
    NegBinomial,
    Poisson,
    PolyParams,
    charlier,
    falling_factorial,
    krawtchouk,
    meixner,
    meixner_generating,
    rising_factorial,
)
from intertwine.verify import convolution_check, orthogonality_check


def test_falling_factorial_values():
    assert falling_factorial(3, 2) == 6
    assert falling_factorial(Fraction(7, 3), 0) == 1
    assert falling_factorial(2, 3) == 0


def test_rising_factorial_values():
    assert rising_factorial(2.5, 0) == 1
    assert rising_factorial(2, 3) == 24
    for k in range(8):
        assert rising_factorial(1, k) == math.factorial(k)


def test_factorials_reject_negative_k():
    with pytest.raises(ValueError):
        falling_factorial(3, -1)
    with pytest.raises(ValueError):
        rising_factorial(3, -1)


def test_charlier_low_degrees():
    assert charlier(0, 5, 1.3) == 1
    for x in range(6):
        assert charlier(1, x, Fraction(3, 2)) == x - Fraction(3, 2)
    assert charlier(2, 3, 1) == 1


def test_meixner_low_degrees():
    assert meixner(0, 4, 2, Fraction(1, 3)) == 1
    a, p = Fraction(3, 2), Fraction(2, 5)
    for x in range(6):
        assert meixner(1, x, a, p) == x - a * p / (1 - p)
    assert meixner(1, 0, 1, Fraction(1, 2)) == -1


def test_exact_arithmetic_when_rational():
    assert isinstance(meixner(3, 2, Fraction(1, 2), Fraction(1, 3)), Fraction)
    assert isinstance(meixner(3, 2, 0.5, 1 / 3), float)


def test_krawtchouk_two_trials():
    # Gram-Schmidt against Bin(2, 1/2) gives x^2 - 2x + 1/2
    th = Fraction(1, 2)
    assert [krawtchouk(2, x, 2, th) for x in range(3)] == [Fraction(1, 2), Fraction(-1, 2), Fraction(1, 2)]


def test_krawtchouk_degree_one_is_centered():
    for x in range(5):
        assert krawtchouk(1, x, 4, Fraction(1, 3)) == x - Fraction(4, 3)


def test_krawtchouk_rejects_degree_above_trials():
    with pytest.raises(ValueError):
        krawtchouk(3, 1, 2, 0.5)


def test_parameter_validation():
    with pytest.raises(ValueError):
        charlier(2, 1, 0)
    with pytest.raises(ValueError):
        meixner(2, 1, 1, 1.0)
    with pytest.raises(ValueError):
        PolyParams("krawtchouk", 2.5, 0.3)
    with pytest.raises(ValueError):
        PolyParams("meixner", 1.0)


def test_generating_function_limit_and_product():
    assert meixner_generating(1e-12, 3, 1.5, 0.4) == pytest.approx(1.0, abs=1e-10)
    t, p = 0.3, 0.4
    lhs = meixner_generating(t, 5, 2.5, p)
    rhs = meixner_generating(t, 2, 1.0, p) * meixner_generating(t, 3, 1.5, p)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_generating_function_partial_sums():
    t, x, a, p = 0.05, 3, 1.5, 0.4
    series = sum(t**n / math.factorial(n) * meixner(n, x, a, p) for n in range(12))
    assert series == pytest.approx(meixner_generating(t, x, a, p), rel=1e-12)


def test_generating_function_rejects_bad_bases():
    with pytest.raises(ValueError):
        meixner_generating(-5.0, 1, 1.0, 0.5)


def test_pmf_values():
    a, p = 1.7, 0.35
    assert orthopoly.pmf(NegBinomial(a, p), 0) == pytest.approx((1 - p) ** a, rel=1e-14)
    assert orthopoly.pmf(Poisson(2.0), 3) == pytest.approx(math.exp(-2) * 8 / 6, rel=1e-14)
    assert orthopoly.pmf(Binomial(3, 0.5), 3) == pytest.approx(0.125)


@pytest.mark.parametrize("dist", [Poisson(1.3), NegBinomial(2.2, 0.6), Binomial(5, 0.3)])
def test_pmf_normalizes(dist):
    L = dist.support_bound(1e-13)
    assert sum(dist.pmf(k) for k in range(L + 1)) == pytest.approx(1.0, abs=1e-12)


def test_moments_match_scipy_mean_and_variance():
    d = NegBinomial(1.0, 0.5)
    assert d.mean() == 1.0
    assert d.variance() == 2.0


def test_orthogonality_constant_is_variance_at_degree_one():
    assert orthopoly.orthogonality_constant(PolyParams("meixner", 1.0, 0.5), 1) == pytest.approx(2.0)
    assert orthopoly.orthogonality_constant(PolyParams("charlier", 1.7), 1) == pytest.approx(1.7)
    assert orthopoly.orthogonality_constant(PolyParams("krawtchouk", 4, 0.25), 1) == pytest.approx(4 * 0.25 * 0.75)


@pytest.mark.parametrize("params", [
    PolyParams("charlier", 0.5), PolyParams("charlier", 1.0), PolyParams("charlier", 2.0),
    PolyParams("meixner", 1.0, 0.5), PolyParams("meixner", 2.5, 0.3),
    PolyParams("krawtchouk", 5, 0.4),
])
def test_orthogonality(params):
    assert orthogonality_check(params, 6).passed


def test_convolution_identity():
    assert convolution_check(1.3, 0.7, 0.4).passed


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 6), a=st.fractions(Fraction(1, 4), 4, max_denominator=8),
       p=st.fractions(Fraction(1, 10), Fraction(9, 10), max_denominator=10))
def test_meixner_is_monic(n, a, p):
    diffs = [meixner(n, x, a, p) for x in range(n + 1)]
    for _ in range(n):
        diffs = [b - a_ for a_, b in zip(diffs, diffs[1:])]
    assert diffs[0] == math.factorial(n)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 6), alpha=st.fractions(Fraction(1, 4), 5, max_denominator=8))
def test_charlier_is_monic(n, alpha):
    diffs = [charlier(n, x, alpha) for x in range(n + 1)]
    for _ in range(n):
        diffs = [b - a for a, b in zip(diffs, diffs[1:])]
    assert diffs[0] == math.factorial(n)


@settings(max_examples=30, deadline=None)
@given(trials=st.integers(1, 6), th=st.fractions(Fraction(1, 10), Fraction(9, 10), max_denominator=10),
       data=st.data())
def test_krawtchouk_is_monic(trials, th, data):
    n = data.draw(st.integers(0, trials))
    diffs = [krawtchouk(n, x, trials, th) for x in range(n + 1)]
    for _ in range(n):
        diffs = [b - a for a, b in zip(diffs, diffs[1:])]
    assert diffs[0] == math.factorial(n)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 5), x=st.integers(0, 10), y=st.integers(0, 10),
       a=st.fractions(Fraction(1, 4), 3, max_denominator=4), b=st.fractions(Fraction(1, 4), 3, max_denominator=4),
       p=st.fractions(Fraction(1, 10), Fraction(9, 10), max_denominator=10))
def test_meixner_convolution_exact(n, x, y, a, b, p):
    lhs = meixner(n, x + y, a + b, p)
    rhs = sum(math.comb(n, k) * meixner(k, x, a, p) * meixner(n - k, y, b, p) for k in range(n + 1))
    assert lhs == rhs
