import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intertwine.gsip import AlphaMeasure
from intertwine.orthopoly import rising_factorial
from intertwine.pointconfig import (
    CountingMeasure,
    GenericFunction,
    Indicator,
    Interval,
    ProductFunction,
    SetPartition,
    TensorIndicator,
    bell_number,
    collapse,
    factorial_integral,
    factorial_via_monomials,
    k_transform,
    lambda_n_integral,
    lambda_sequential,
    lambda_sequential_check,
    lowering,
    mobius_coefficient,
    monomial_via_factorials,
    product_integral,
    set_partitions,
)

ONE2 = GenericFunction(2, lambda x, y: 1.0, bound=1.0)
A, B = 0, 1


class SiteMass:
    """Weights on sites acting as a measure on sets of sites."""

    def __init__(self, w):
        self.w = w

    def mass(self, cell):
        return float(sum(self.w[x] for x in cell))


# --- counting measures ---------------------------------------------------------


def test_canonical_storage_and_equality():
    a = CountingMeasure([0.5, 0.1, 0.5])
    b = CountingMeasure([0.1, 0.5, 0.5])
    assert a == b and hash(a) == hash(b)
    assert a.points == (0.1, 0.5, 0.5)
    assert a.total == 3
    assert a.count(Interval(0.4, 0.6)) == 2


def test_occupation_round_trip():
    eta = CountingMeasure.from_occupation((2, 0, 1))
    assert eta.points == (0, 0, 2)
    assert eta.occupation() == (2, 0, 1)


def test_json_round_trip():
    for eta in [CountingMeasure([2, 0, 0], m=3), CountingMeasure([0.25, 0.75])]:
        assert CountingMeasure.from_json(eta.to_json()) == eta
    assert CountingMeasure([1, 0]).to_json() == "[0, 1]"


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        CountingMeasure([1.0])
    with pytest.raises(ValueError):
        CountingMeasure([3], m=3)
    with pytest.raises(ValueError):
        CountingMeasure.from_json('{"a": 1}')


# --- integrals ------------------------------------------------------------------


def test_factorial_integral_examples():
    eta = CountingMeasure([A, A, B])
    assert factorial_integral(eta, 2, ONE2) == 6
    cell = Interval(0.0, 0.5)
    f = TensorIndicator([cell], [2])
    assert factorial_integral(CountingMeasure([0.1, 0.2, 0.3, 0.9]), 2, f) == 6
    assert factorial_integral(eta, 4, GenericFunction(4, lambda *x: 1.0, 1.0)) == 0.0
    assert factorial_integral(eta, 0, 2.5) == 2.5


def test_closed_form_matches_enumeration():
    eta = CountingMeasure([0.1, 0.2, 0.2, 0.6, 0.8])
    f = TensorIndicator([Interval(0, 0.3), Interval(0.5, 1)], [2, 1])
    assert factorial_integral(eta, 3, f) == factorial_integral(eta, 3, f, method="enumerate")
    assert product_integral(eta, 3, f) == product_integral(eta, 3, f, method="enumerate")


def test_product_integral_examples():
    assert product_integral(CountingMeasure([A, B]), 2, ONE2) == 4
    f = TensorIndicator([Interval(0, 0.5)], [2])
    assert product_integral(CountingMeasure([0.1, 0.2, 0.3]), 2, f) == 9
    assert product_integral(CountingMeasure([A]), 0, 1.5) == 1.5


def test_arity_mismatch():
    with pytest.raises(ValueError):
        factorial_integral(CountingMeasure([A, B]), 3, ONE2)
    with pytest.raises(ValueError):
        product_integral(CountingMeasure([A, B]), 1, ONE2)


def test_bound_is_enforced():
    liar = GenericFunction(1, lambda x: 5.0, bound=1.0)
    with pytest.raises(ValueError):
        factorial_integral(CountingMeasure([A]), 1, liar)
    with pytest.raises(ValueError):
        GenericFunction(1, lambda x: 1.0, bound=math.inf)
    with pytest.raises(ValueError):
        ProductFunction([lambda x: 1.0])


def test_tensor_indicator_needs_disjoint_cells():
    with pytest.raises(ValueError):
        TensorIndicator([Interval(0, 0.5), Interval(0.4, 1)], [1, 1])


@pytest.mark.parametrize("N", range(6))
def test_total_mass_of_factorial_measure(N):
    eta = CountingMeasure([0.1 * k for k in range(N)])
    for n in range(1, 4):
        f = GenericFunction(n, lambda *x: 1.0, 1.0)
        assert factorial_integral(eta, n, f) == math.perm(N, n)


def test_k_transform_examples():
    zero = CountingMeasure([])
    assert k_transform(zero, lambda cfg: 7.0) == 7.0
    cell = Interval(0, 0.5)
    eta = CountingMeasure([0.1, 0.2, 0.3, 0.7])
    F = lambda cfg: float(cfg.total == 1 and cfg.count(cell) == 1)  # noqa: E731
    assert k_transform(eta, F) == 3
    assert k_transform(eta, lambda cfg: 1.0) == 2**4


def test_k_transform_linearity():
    rng = np.random.default_rng(3)
    eta = CountingMeasure(rng.random(5).round(3).tolist())
    F = lambda cfg: sum(cfg.points) ** 2  # noqa: E731
    G = lambda cfg: float(cfg.total)  # noqa: E731
    lhs = k_transform(eta, lambda cfg: 2 * F(cfg) - 3 * G(cfg))
    assert lhs == pytest.approx(2 * k_transform(eta, F) - 3 * k_transform(eta, G), rel=1e-12)


def test_lowering_examples():
    assert lowering(CountingMeasure([A]), lambda cfg: 1.0) == 1
    F = lambda cfg: float(cfg.points == (A,))  # noqa: E731
    assert lowering(CountingMeasure([A, A]), F) == 2
    assert lowering(CountingMeasure([]), lambda cfg: 1.0) == 0


# --- set partitions -------------------------------------------------------------


def test_partition_counts():
    assert len(set_partitions(1)) == 1
    assert len(set_partitions(3)) == 5
    assert len(set_partitions(5)) == 52
    for n in range(1, 9):
        assert len(set_partitions(n)) == bell_number(n)


def test_partitions_are_distinct_and_valid():
    parts = set_partitions(4)
    assert len({p.blocks for p in parts}) == 15
    assert parts[0].blocks == ((0, 1, 2, 3),)
    assert parts[-1].blocks == ((0,), (1,), (2,), (3,))


def test_partition_range():
    with pytest.raises(ValueError):
        set_partitions(0)
    with pytest.raises(ValueError):
        set_partitions(11)
    with pytest.raises(ValueError):
        SetPartition(((0, 1), (1, 2)))


def test_collapse_examples():
    rng = np.random.default_rng(0)
    g, h = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    f = ProductFunction([lambda x: g[x], lambda x: h[x], lambda x: g[x]], bound=1.0)
    singles = SetPartition(((0,), (1,), (2,)))
    fs = collapse(f, singles)
    for xs in itertools.product(range(3), repeat=3):
        assert fs(*xs) == f(*xs)
    s = SetPartition(((0, 2), (1,)))
    fc = collapse(f, s)
    for u, v in itertools.product(range(3), repeat=2):
        assert fc(u, v) == pytest.approx(g[u] ** 2 * h[v])
    cell = Interval(0.2, 0.6)
    one = collapse(ProductFunction([Indicator(cell), Indicator(cell)]), SetPartition(((0, 1),)))
    assert one.arity == 1 and one(0.3) == 1.0 and one(0.7) == 0.0


def test_collapse_keeps_bound():
    f = GenericFunction(3, lambda x, y, z: math.sin(x + 2 * y + 3 * z), bound=1.0)
    for s in set_partitions(3):
        fc = collapse(f, s)
        assert fc.bound <= f.bound
        for xs in itertools.product([0.1, 0.5, 0.9], repeat=len(s)):
            assert abs(fc(*xs)) <= fc.bound


def test_mobius_coefficients():
    assert mobius_coefficient(SetPartition(((0, 1, 2),))) == 2
    assert mobius_coefficient(SetPartition(((0, 1), (2,)))) == -1
    assert mobius_coefficient(SetPartition(((0,), (1,), (2,)))) == 1


def test_monomial_via_factorials_example():
    eta = CountingMeasure([A, A])
    assert monomial_via_factorials(eta, 2, ONE2) == 4
    f1 = GenericFunction(1, lambda x: x + 1.0, bound=3.0)
    eta = CountingMeasure([A, B, B])
    assert monomial_via_factorials(eta, 1, f1) == product_integral(eta, 1, f1)


@pytest.mark.parametrize("N", range(6))
def test_factorial_via_monomials_two(N):
    eta = CountingMeasure([0] * N)
    assert factorial_via_monomials(eta, 2, ONE2) == N * N - N


def test_signs_only_inversion_fails_at_three():
    # (-1)^(n-|sigma|) alone misses the (|A|-1)! block factor once a block has 3 elements
    eta = CountingMeasure([0.1, 0.2, 0.3, 0.4])
    f = GenericFunction(3, lambda *x: 1.0, 1.0)
    assert factorial_via_monomials(eta, 3, f) == 24
    assert factorial_via_monomials(eta, 3, f, coefficients="signs_only") != 24
    assert factorial_via_monomials(eta, 2, ONE2, coefficients="signs_only") == 12


def _random_product(rng, n, m):
    tables = rng.uniform(-1, 1, size=(n, m))
    return ProductFunction([lambda x, t=t: float(t[x]) for t in tables],
                           bound=float(np.prod(np.abs(tables).max(axis=1))))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(0, 5), n=st.integers(1, 4))
def test_partition_inversions_against_brute_force(seed, N, n):
    rng = np.random.default_rng(seed)
    eta = CountingMeasure(rng.integers(0, 3, size=N).tolist(), space="site", m=3)
    f = _random_product(rng, n, 3)
    fac = factorial_integral(eta, n, f, method="enumerate")
    prod = product_integral(eta, n, f, method="enumerate")
    assert factorial_via_monomials(eta, n, f) == pytest.approx(fac, abs=1e-12)
    assert monomial_via_factorials(eta, n, f) == pytest.approx(prod, abs=1e-12)


# --- lambda_n ---------------------------------------------------------------------


def test_lambda_one_is_alpha():
    alpha = AlphaMeasure([1.0, 3.0], [(0.2, 0.5)])
    cell = Interval(0.1, 0.7)
    assert lambda_n_integral(alpha, 1, ProductFunction([Indicator(cell)])) == pytest.approx(alpha.mass(cell))


def test_lambda_two_on_square():
    alpha = SiteMass([0.7, 1.3])
    f = ProductFunction([Indicator({0, 1}), Indicator({0, 1})])
    c = 2.0
    assert lambda_n_integral(alpha, 2, f) == pytest.approx(c * c + c)


def test_lambda_on_disjoint_cells_is_rising_product():
    alpha = AlphaMeasure([1.0, 2.0, 0.5, 1.5])
    cells = [Interval(0, 0.3), Interval(0.3, 0.55), Interval(0.6, 1.0)]
    degrees = [2, 1, 1]
    f = TensorIndicator(cells, degrees)
    expected = np.prod([rising_factorial(alpha.mass(c), d) for c, d in zip(cells, degrees)])
    assert lambda_n_integral(alpha, 4, f) == pytest.approx(expected, rel=1e-12)


def test_lambda_symmetric_under_reordering():
    alpha = AlphaMeasure([1.0, 2.0, 0.5, 1.5])
    cells = [Interval(0, 0.3), Interval(0.3, 0.55), Interval(0.6, 1.0)]
    degrees = [2, 1, 1]
    base = lambda_n_integral(alpha, 4, TensorIndicator(cells, degrees))
    for perm in itertools.permutations(range(3)):
        f = TensorIndicator([cells[i] for i in perm], [degrees[i] for i in perm])
        assert lambda_n_integral(alpha, 4, f) == pytest.approx(base, rel=1e-12)


def test_sequential_construction_matches_partition_sum():
    alpha = AlphaMeasure([1.0, 2.0, 0.5, 1.5], [(0.4, 0.3)])
    assert lambda_sequential(alpha, 1.0) == 1.0
    cells = [Interval(0, 0.5), Interval(0.2, 0.8), Interval(0.3, 1.0), Interval(0.1, 0.45)]
    for n in range(1, 5):
        f = ProductFunction([Indicator(c) for c in cells[:n]])
        assert lambda_sequential(alpha, f) == pytest.approx(lambda_n_integral(alpha, n, f), rel=1e-12)
    f = ProductFunction([Indicator(c) for c in cells[:3]])
    assert lambda_sequential_check(alpha, 2, f) == pytest.approx(lambda_n_integral(alpha, 3, f), rel=1e-12)
    with pytest.raises(ValueError):
        lambda_sequential_check(alpha, 3, f)


def test_lambda_rejects_generic_functions():
    with pytest.raises(ValueError):
        lambda_n_integral(SiteMass([1.0]), 1, GenericFunction(1, lambda x: 1.0, 1.0))
