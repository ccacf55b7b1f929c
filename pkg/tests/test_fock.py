import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_monomial, ladder_matrices, sector_projection
from twomode.fock import (
    NormalMonomial,
    OperatorError,
    StateVector,
    SystemParams,
    TwoModeOperator,
    dense_operator,
    ensemble_variance_exact,
    expectation,
    matrix_element,
    microcanonical_trace,
    operator_from_terms,
    to_band_matrix,
    variance_components,
)


def test_params_validation():
    SystemParams(10, 11)
    for N, n in [(9, 3), (10, 4), (10, 13), (0, 1), (10, 0)]:
        with pytest.raises(ValueError):
            SystemParams(N, n)


def test_state_normalization_checked():
    p = SystemParams(10, 3)
    with pytest.raises(ValueError):
        StateVector(p, np.array([1.0, 1.0, 0.0]))
    s = StateVector.normalized(p, [1.0, 1.0, 0.0])
    assert np.isclose(np.vdot(s.amplitudes, s.amplitudes).real, 1.0)


def test_number_operator_expectations():
    p = SystemParams(10, 3)
    na = TwoModeOperator.number_a()
    assert microcanonical_trace(na, p) == pytest.approx(5.0, abs=1e-12)
    na2 = na.normal_product(na) + na                  # N_a^2 = a+a+aa + a+a
    assert microcanonical_trace(na2, p) == pytest.approx(77 / 3, rel=1e-14)
    assert ensemble_variance_exact(na, SystemParams(10, 7)) == pytest.approx(4.0, rel=1e-12)


def test_hopping_matrix_small_sector():
    hop = operator_from_terms([(1, 0, 0, 1, 1.0), (0, 1, 1, 0, 1.0)], hermitian=True)
    mat = dense_operator(hop, SystemParams(2, 3))
    r2 = np.sqrt(2)
    assert np.allclose(mat, [[0, r2, 0], [r2, 0, r2], [0, r2, 0]], atol=1e-14)


def test_total_number_is_identity_times_N():
    op = TwoModeOperator.number_a() + TwoModeOperator.number_b()
    mat = to_band_matrix(op, SystemParams(40, 9))
    assert list(mat.diags) == [0]
    assert np.allclose(mat.diagonal(), 40)


def test_non_conserving_rejected():
    with pytest.raises(OperatorError):
        to_band_matrix(operator_from_terms([(1, 0, 0, 0, 1.0)]), SystemParams(4, 3))
    with pytest.raises(OperatorError):
        NormalMonomial(-1, 0, 0, 0)


def test_matrix_element_bounds():
    mono = NormalMonomial(1, 0, 0, 1)
    p = SystemParams(4, 3)
    assert matrix_element(mono, 1, 0, p) == pytest.approx(np.sqrt(6.0))    # sqrt(3) sqrt(2)
    assert matrix_element(mono, 0, 0, p) == 0
    with pytest.raises(IndexError):
        matrix_element(mono, 5, 4, p)


monomials = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)).map(
    lambda t: (t[0], t[1], t[2], t[0] + t[1] - t[2])
).filter(lambda t: t[3] >= 0)


@settings(max_examples=60, deadline=None)
@given(monomials, st.integers(1, 6), st.data())
def test_band_matrix_matches_dense_ladder_oracle(powers, halfN, data):
    N = 2 * halfN
    n = 2 * data.draw(st.integers(0, halfN)) + 1
    params = SystemParams(N, n)
    a, b = ladder_matrices(N + 2)
    full = dense_monomial(a, b, *powers)
    # restrict to the N-particle sector rows/columns of the truncated space
    dim = N + 3
    ells = np.arange(-(n // 2), n // 2 + 1)
    cols = [(N // 2 + l) * dim + (N // 2 - l) for l in ells]
    expected = full[np.ix_(cols, cols)]
    got = dense_operator(operator_from_terms([(*powers, 1.0)]), params)
    assert np.allclose(got, expected, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(expected).max()))


def test_sector_projection_helper():
    assert list(sector_projection(2, [-1, 0, 1])) == [2, 4, 6]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(monomials, st.complex_numbers(max_magnitude=3, allow_nan=False,
                                                           allow_infinity=False)), min_size=1, max_size=4))
def test_hermitian_completion_is_hermitian(terms):
    op = TwoModeOperator([NormalMonomial(*p, c) for p, c in terms])
    herm = op + op.adjoint()
    mat = to_band_matrix(herm, SystemParams(12, 7))
    assert mat.is_hermitian()
    assert herm.bandwidth <= 3


def test_variance_uses_widened_range():
    # <l|A^2|l> needs the intermediate states outside H_n
    hop = operator_from_terms([(1, 0, 0, 1, 1.0), (0, 1, 1, 0, 1.0)], hermitian=True)
    p = SystemParams(20, 5)
    big = dense_operator(hop, SystemParams(20, 21))
    sq = big @ big
    idx = np.arange(-2, 3) + 10
    expected = np.mean(sq[idx, idx].real) - np.mean(big[idx, idx].real) ** 2
    assert ensemble_variance_exact(hop, p) == pytest.approx(expected, rel=1e-12)


def test_variance_components_add_up():
    op = TwoModeOperator.number_a().normal_product(TwoModeOperator.number_b())
    p = SystemParams(30, 9)
    q, e = variance_components(op, p)
    assert q == pytest.approx(0.0, abs=1e-9)        # diagonal operator: no quantum part
    assert q + e == pytest.approx(ensemble_variance_exact(op, p), rel=1e-12)


def test_expectation_and_matmat_agree():
    rng = np.random.default_rng(3)
    p = SystemParams(16, 7)
    op = operator_from_terms([(2, 0, 0, 2, 1.0), (0, 2, 2, 0, 1.0), (1, 1, 1, 1, 0.5)], hermitian=True)
    amps = rng.normal(size=7) + 1j * rng.normal(size=7)
    st_ = StateVector.normalized(p, amps)
    mat = to_band_matrix(op, p)
    assert expectation(op, st_) == pytest.approx(np.vdot(st_.amplitudes, mat.to_dense() @ st_.amplitudes).real)
    X = rng.normal(size=(7, 3)) + 0j
    assert np.allclose(mat.matmat(X), mat.to_dense() @ X)


def test_basis_state_expectation_is_diagonal():
    p = SystemParams(10, 5)
    na = TwoModeOperator.number_a()
    for ell in range(-2, 3):
        assert expectation(na, StateVector.basis(p, ell)) == pytest.approx(5 + ell)


def test_overflow_is_reported():
    op = operator_from_terms([(6, 0, 6, 0, 1e300)], hermitian=True)
    with pytest.raises(OverflowError):
        to_band_matrix(op, SystemParams(10**6, 3))
