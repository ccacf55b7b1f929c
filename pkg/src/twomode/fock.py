"""Two-mode Fock space at fixed particle number.

The basis state ``|l>`` holds ``N/2 + l`` bosons in mode a and ``N/2 - l`` in
mode b.  Operators are finite sums of normal-ordered monomials
``c a+^p b+^q a^r b^s`` and are materialized as band matrices in ``l``: a
number-conserving monomial shifts ``l`` by ``p - r``, so an operator with
``max |p - r| = w`` has bandwidth ``w``.

Square-root factorial ratios are built as running products of at most a
handful of factors, so matrix elements stay finite far beyond ``N = 10**6``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class OperatorError(ValueError):
    """Raised for malformed or non-number-conserving operators."""


@dataclass(frozen=True)
class SystemParams:
    """Even particle number ``N`` and odd sampled-subspace dimension ``n``."""

    N: int
    n: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N <= 0 or self.N % 2:
            raise ValueError(f"N must be a positive even integer, got {self.N}")
        if int(self.n) != self.n or self.n < 1 or self.n % 2 == 0:
            raise ValueError(f"n must be a positive odd integer, got {self.n}")
        if self.n > self.N + 1:
            raise ValueError(f"n={self.n} exceeds N+1={self.N + 1}")

    @property
    def half_width(self) -> int:
        return (self.n - 1) // 2

    @property
    def ells(self) -> np.ndarray:
        h = self.half_width
        return np.arange(-h, h + 1)

    def sector_range(self, pad: int = 0) -> tuple[int, int]:
        """Index range ``[lo, hi]`` of H_n widened by ``pad``, clipped to the sector."""
        h = self.half_width + pad
        return max(-h, -self.N // 2), min(h, self.N // 2)


@dataclass(frozen=True)
class StateVector:
    params: SystemParams
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.params.n,):
            raise ValueError(f"expected {self.params.n} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, params: SystemParams, ell: int) -> "StateVector":
        amps = np.zeros(params.n, dtype=complex)
        amps[ell + params.half_width] = 1.0
        return cls(params, amps)

    @classmethod
    def normalized(cls, params: SystemParams, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(params, amps / np.linalg.norm(amps))


@dataclass(frozen=True)
class NormalMonomial:
    """``coefficient * a+^p b+^q a^r b^s`` (creators to the left)."""

    p: int
    q: int
    r: int
    s: int
    coefficient: complex = 1.0

    def __post_init__(self):
        if min(self.p, self.q, self.r, self.s) < 0:
            raise OperatorError(f"negative power in monomial {self.powers}")

    @property
    def powers(self) -> tuple[int, int, int, int]:
        return (self.p, self.q, self.r, self.s)

    @property
    def number_conserving(self) -> bool:
        return self.p + self.q == self.r + self.s

    @property
    def shift(self) -> int:
        return self.p - self.r

    def adjoint(self) -> "NormalMonomial":
        return NormalMonomial(self.r, self.s, self.p, self.q, np.conj(self.coefficient))


def _sqrt_falling(x: np.ndarray, k: int) -> np.ndarray:
    """sqrt(x (x-1) ... (x-k+1)), zero wherever x < k."""
    out = np.ones_like(x, dtype=float)
    for i in range(k):
        out = out * np.sqrt(np.clip(x - i, 0, None))
    return out


def _monomial_column(mono: NormalMonomial, ells: np.ndarray, N: int) -> np.ndarray:
    """Amplitude ``<l + shift| mono |l>`` for each ket index in ``ells``."""
    na = N // 2 + ells.astype(float)
    nb = N // 2 - ells.astype(float)
    amp = _sqrt_falling(nb, mono.s) * _sqrt_falling(na, mono.r)
    na2 = na - mono.r
    nb2 = nb - mono.s
    amp = amp * _sqrt_falling(na2 + mono.p, mono.p) * _sqrt_falling(nb2 + mono.q, mono.q)
    amp = np.where((na >= mono.r) & (nb >= mono.s), amp, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):   # reported by to_band_matrix
        return mono.coefficient * amp


def matrix_element(mono: NormalMonomial, ell_bra: int, ell_ket: int, params: SystemParams) -> complex:
    """``<l_bra| mono |l_ket>`` inside the full N-particle sector."""
    if not mono.number_conserving:
        raise OperatorError(f"monomial {mono.powers} does not conserve particle number")
    half = params.N // 2
    for ell in (ell_bra, ell_ket):
        if abs(ell) > half:
            raise IndexError(f"index {ell} outside the N={params.N} sector")
    if ell_bra != ell_ket + mono.shift:
        return 0j
    return complex(_monomial_column(mono, np.array([ell_ket]), params.N)[0])


class TwoModeOperator:
    """Immutable sum of normal-ordered two-mode monomials."""

    __slots__ = ("monomials", "hermitian")

    def __init__(self, monomials: Iterable[NormalMonomial] = (), hermitian: bool = False):
        merged: dict[tuple[int, int, int, int], complex] = {}
        for m in monomials:
            merged[m.powers] = merged.get(m.powers, 0j) + complex(m.coefficient)
        self.monomials = tuple(NormalMonomial(*k, c) for k, c in sorted(merged.items()) if c != 0)
        self.hermitian = hermitian

    @classmethod
    def identity(cls) -> "TwoModeOperator":
        return cls([NormalMonomial(0, 0, 0, 0, 1.0)], hermitian=True)

    @classmethod
    def number_a(cls) -> "TwoModeOperator":
        return cls([NormalMonomial(1, 0, 1, 0, 1.0)], hermitian=True)

    @classmethod
    def number_b(cls) -> "TwoModeOperator":
        return cls([NormalMonomial(0, 1, 0, 1, 1.0)], hermitian=True)

    @property
    def bandwidth(self) -> int:
        return max((abs(m.shift) for m in self.monomials), default=0)

    @property
    def number_conserving(self) -> bool:
        return all(m.number_conserving for m in self.monomials)

    def __add__(self, other: "TwoModeOperator") -> "TwoModeOperator":
        return TwoModeOperator(self.monomials + other.monomials, self.hermitian and other.hermitian)

    def scaled(self, c: complex) -> "TwoModeOperator":
        return TwoModeOperator(
            (NormalMonomial(*m.powers, m.coefficient * c) for m in self.monomials),
            self.hermitian and complex(c).imag == 0,
        )

    def adjoint(self) -> "TwoModeOperator":
        return TwoModeOperator((m.adjoint() for m in self.monomials), self.hermitian)

    def normal_product(self, other: "TwoModeOperator") -> "TwoModeOperator":
        """``:self other:`` -- the product with all creators moved left, no contractions."""
        out = [
            NormalMonomial(m1.p + m2.p, m1.q + m2.q, m1.r + m2.r, m1.s + m2.s,
                           m1.coefficient * m2.coefficient)
            for m1 in self.monomials for m2 in other.monomials
        ]
        return TwoModeOperator(out, self.hermitian and other.hermitian)

    def __repr__(self):
        return f"TwoModeOperator({len(self.monomials)} monomials, bandwidth={self.bandwidth})"


@dataclass(frozen=True)
class BandMatrix:
    """Square matrix over the index range ``lo..hi`` stored by diagonals.

    ``diags[d][j]`` is the entry in row ``j + d``, column ``j``; slots whose row
    falls outside the range are zero.
    """

    lo: int
    hi: int
    diags: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.hi - self.lo + 1

    @property
    def ells(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def bandwidth(self) -> int:
        return max((abs(d) for d in self.diags), default=0)

    def diagonal(self) -> np.ndarray:
        return self.diags.get(0, np.zeros(self.dim, dtype=complex))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        cols = np.arange(self.dim)
        for d, v in self.diags.items():
            rows = cols + d
            ok = (rows >= 0) & (rows < self.dim)
            out[rows[ok], cols[ok]] = v[ok]
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for d, v in self.diags.items():
            if d >= 0:
                out[d:] += v[: self.dim - d] * x[: self.dim - d]
            else:
                out[: self.dim + d] += v[-d:] * x[-d:]
        return out

    def matmat(self, x: np.ndarray) -> np.ndarray:
        """Apply to every column of ``x`` (shape ``(dim, B)``)."""
        out = np.zeros(x.shape, dtype=complex)
        for d, v in self.diags.items():
            if d >= 0:
                out[d:] += v[: self.dim - d, None] * x[: self.dim - d]
            else:
                out[: self.dim + d] += v[-d:, None] * x[-d:]
        return out

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        scale = max((float(np.max(np.abs(v))) for v in self.diags.values() if v.size), default=0.0)
        tol = atol * max(scale, 1.0)
        for d, v in self.diags.items():
            w = self.diags.get(-d, np.zeros(self.dim, dtype=complex))
            # entry (j+d, j) against conj of (j, j+d), stored in diagonal -d at column j+d
            if d >= 0:
                a, b = v[: self.dim - d], w[d:]
            else:
                a, b = v[-d:], w[: self.dim + d]
            if a.size and np.max(np.abs(a - np.conj(b))) > tol:
                return False
        return True

    def shifted(self, c: complex) -> "BandMatrix":
        diags = dict(self.diags)
        diags[0] = self.diagonal() - c
        return BandMatrix(self.lo, self.hi, diags)


def to_band_matrix(op: TwoModeOperator, params: SystemParams, pad: int = 0) -> BandMatrix:
    """Band matrix of ``op`` on H_n, optionally widened by ``pad`` indices.

    Widening is what makes ``A^2`` exact on H_n: intermediate states may sit up
    to one bandwidth outside the sampled band.
    """
    if not op.number_conserving:
        bad = [m.powers for m in op.monomials if not m.number_conserving]
        raise OperatorError(f"non-number-conserving monomials {bad}")
    lo, hi = params.sector_range(pad)
    ells = np.arange(lo, hi + 1)
    dim = ells.size
    diags: dict[int, np.ndarray] = {}
    for mono in op.monomials:
        d = mono.shift
        col = _monomial_column(mono, ells, params.N)
        rows = np.arange(dim) + d
        col = np.where((rows >= 0) & (rows < dim), col, 0.0)
        diags[d] = diags.get(d, np.zeros(dim, dtype=complex)) + col
    for v in diags.values():
        if not np.all(np.isfinite(v)):
            raise OverflowError(
                f"matrix entries overflow at N={params.N}; rescale the operator coefficients"
            )
    return BandMatrix(lo, hi, diags)


def expectation(op: TwoModeOperator, state: StateVector) -> complex | float:
    """``<Phi|A|Phi>``; returned as a float when ``op`` is declared Hermitian."""
    mat = to_band_matrix(op, state.params)
    if mat.dim != state.amplitudes.size:
        raise ValueError("operator and state dimensions differ")
    val = complex(np.vdot(state.amplitudes, mat.matvec(state.amplitudes)))
    if op.hermitian:
        if abs(val.imag) > 1e-10 * max(abs(val.real), 1.0):
            raise ArithmeticError(f"Hermitian expectation has imaginary part {val.imag!r}")
        return val.real
    return val


def _sampled_columns(mat: BandMatrix, params: SystemParams) -> slice:
    h = params.half_width
    return slice(-h - mat.lo, h - mat.lo + 1)


def microcanonical_trace(op: TwoModeOperator, params: SystemParams) -> float:
    """``Tr(rho_n A) = (1/n) sum_{|l|<n/2} <l|A|l>``."""
    mat = to_band_matrix(op, params)
    return float(np.mean(mat.diagonal().real))


def ensemble_variance_exact(
    op: TwoModeOperator,
    params: SystemParams,
    second_moment: TwoModeOperator | None = None,
) -> float:
    """``Tr(rho_n A^2) - Tr(rho_n A)^2``.

    Without ``second_moment`` the square is taken inside the two-mode algebra
    (band matrix squared on the widened range).  Passing ``second_moment``
    substitutes an externally built operator for ``A^2``, e.g. the full-field
    square of a density correlation.
    """
    mean = microcanonical_trace(op, params)
    if second_moment is not None:
        m2 = to_band_matrix(second_moment, params).diagonal().real
        var = float(np.mean(m2 - mean**2))
        scale = max(float(np.max(np.abs(m2))), mean**2, 1.0)
    else:
        mat = to_band_matrix(op, params, pad=op.bandwidth).shifted(mean)
        cols = _sampled_columns(mat, params)
        acc = np.zeros(mat.dim)
        for v in mat.diags.values():
            acc += np.abs(v) ** 2
        var = float(np.mean(acc[cols]))
        scale = max(mean**2, float(np.max(acc)), 1.0)
    if var < -1e-9 * scale:
        raise ArithmeticError(f"negative ensemble variance {var!r}")
    return max(var, 0.0)


def variance_components(
    op: TwoModeOperator,
    params: SystemParams,
    second_moment: TwoModeOperator | None = None,
) -> tuple[float, float]:
    """Split the ensemble variance into ``(quantum, ensemble)`` parts.

    The ensemble part is the spread of the Fock-state means ``<l|A|l>`` over
    H_n; the quantum part is the Fock-state quantum variance averaged over
    H_n.  They add up to :func:`ensemble_variance_exact`.
    """
    total = ensemble_variance_exact(op, params, second_moment)
    diag = basis_expectations(op, params)
    spread = float(np.var(diag))
    return total - spread, spread


def dense_operator(op: TwoModeOperator, params: SystemParams, pad: int = 0) -> np.ndarray:
    return to_band_matrix(op, params, pad).to_dense()


def basis_expectations(op: TwoModeOperator, params: SystemParams) -> np.ndarray:
    return to_band_matrix(op, params).diagonal().real


def operator_from_terms(terms: Sequence[tuple[int, int, int, int, complex]], hermitian=False) -> TwoModeOperator:
    return TwoModeOperator((NormalMonomial(*t) for t in terms), hermitian=hermitian)
