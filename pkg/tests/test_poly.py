from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twomode.poly import (
    BivariatePoly,
    bernoulli,
    direct_moment_sum,
    half_n_coefficient,
    moment_sum,
    power_sum,
)

polys = st.dictionaries(
    st.tuples(st.integers(0, 3), st.integers(0, 3)),
    st.fractions(min_value=-5, max_value=5, max_denominator=7),
    max_size=5,
).map(BivariatePoly)


def test_bernoulli_values():
    assert [bernoulli(j) for j in range(5)] == [1, Fraction(1, 2), Fraction(1, 6), 0, Fraction(-1, 30)]


def test_power_sum_closed_forms():
    n = BivariatePoly.n()
    assert power_sum(0) == n
    assert power_sum(1).is_zero()
    assert power_sum(2) == (n**3 - n) * Fraction(1, 12)


@pytest.mark.parametrize("j", range(9))
def test_power_sum_matches_direct(j):
    for n in range(1, 30, 2):
        h = (n - 1) // 2
        assert power_sum(j)(0, n) == sum(l**j for l in range(-h, h + 1))


def test_faulhaber_against_least_squares_fit():
    # fit an exact degree-5 polynomial through direct sums at six odd n
    import numpy as np

    ns = np.arange(1, 13, 2, dtype=float)
    vals = [sum(l**4 for l in range(-(int(n) - 1) // 2, (int(n) - 1) // 2 + 1)) for n in ns]
    fit = np.polyfit(ns, vals, 5)[::-1]
    poly = power_sum(4)
    for q, c in enumerate(fit):
        assert abs(float(poly.coefficient(0, q)) - c) < 1e-8


def test_moment_sum_example():
    poly = moment_sum(2, 1)
    assert poly == BivariatePoly({(2, 0): Fraction(1, 4), (0, 2): Fraction(-1, 12), (0, 0): Fraction(1, 12)})
    assert poly(10, 3) == Fraction(73, 3)


def test_moment_sum_degrees():
    for k in range(5):
        for m in range(k + 1):
            poly = moment_sum(k, m)
            assert poly.degree == k
            assert poly.coefficient(k, 0) == Fraction(1, 2**k)


def test_moment_sum_rejects_out_of_range():
    with pytest.raises(ValueError):
        moment_sum(2, 3)
    with pytest.raises(ValueError):
        moment_sum(7, 0)


@given(st.integers(0, 4), st.integers(1, 12), st.data())
def test_moment_sum_matches_integer_sum(k, halfN, data):
    N = 2 * halfN
    n = data.draw(st.integers(0, halfN)) * 2 + 1
    m = data.draw(st.integers(0, k))
    assert moment_sum(k, m)(N, n) == direct_moment_sum(k, m, N, n)


def test_moment_sum_symmetric_in_m():
    # swapping a and b maps l -> -l, invisible after the symmetric sum
    for k in range(5):
        for m in range(k + 1):
            assert moment_sum(k, m) == moment_sum(k, k - m)


def test_half_n_coefficient_scaling():
    poly = BivariatePoly({(3, 1): Fraction(1, 8)})
    assert half_n_coefficient(poly, 3, 1) == 1


@settings(max_examples=50)
@given(polys, polys, polys)
def test_ring_axioms(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) * r == p * r + q * r
    assert p - p == BivariatePoly()
    assert (p * q)(3, 5) == p(3, 5) * q(3, 5)


@given(polys)
def test_json_round_trip(p):
    assert BivariatePoly.from_json(p.to_json()) == p


def test_pow_and_str():
    p = BivariatePoly.N() - BivariatePoly.n()
    assert p**2 == BivariatePoly({(2, 0): 1, (1, 1): -2, (0, 2): 1})
    assert str(p**2) == "N^2 - 2*N*n + n^2"
    assert str(BivariatePoly()) == "0"
    with pytest.raises(ValueError):
        p**-1


def test_exact_evaluation_of_floats_is_exact():
    p = BivariatePoly({(1, 0): Fraction(1, 3)})
    assert p(0.5, 1) == Fraction(1, 6)
