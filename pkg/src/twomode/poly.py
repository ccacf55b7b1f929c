"""Exact bivariate polynomials in the particle number N and subspace dimension n.

Coefficients are :class:`fractions.Fraction`; nothing here touches floating
point.  The ensemble averages over the band ``|l| < n/2`` are obtained
symbolically: products of shifted occupation numbers are expanded as
polynomials in ``(N, l)`` and every ``l**j`` is replaced by the Faulhaber
closed form of ``sum_l l**j`` divided by ``n``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Mapping

Number = int | Fraction


class BivariatePoly:
    """Polynomial ``sum c[p, q] N**p n**q`` with exact rational coefficients.

    Instances are immutable; zero coefficients are never stored.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[tuple[int, int], Number] | None = None):
        clean: dict[tuple[int, int], Fraction] = {}
        for (p, q), c in (terms or {}).items():
            if p < 0 or q < 0:
                raise ValueError(f"negative exponent in term {(p, q)}")
            c = Fraction(c)
            if c:
                clean[(int(p), int(q))] = clean.get((int(p), int(q)), Fraction(0)) + c
        self._terms = {k: v for k, v in clean.items() if v}

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c: Number) -> "BivariatePoly":
        return cls({(0, 0): c})

    @classmethod
    def N(cls) -> "BivariatePoly":
        return cls({(1, 0): 1})

    @classmethod
    def n(cls) -> "BivariatePoly":
        return cls({(0, 1): 1})

    # -- inspection -------------------------------------------------------
    @property
    def terms(self) -> dict[tuple[int, int], Fraction]:
        return dict(self._terms)

    def coefficient(self, p: int, q: int) -> Fraction:
        return self._terms.get((p, q), Fraction(0))

    @property
    def degree(self) -> int:
        return max((p + q for p, q in self._terms), default=-1)

    @property
    def degree_N(self) -> int:
        return max((p for p, _ in self._terms), default=-1)

    @property
    def degree_n(self) -> int:
        return max((q for _, q in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def __call__(self, N: Number, n: Number) -> Fraction:
        """Evaluate exactly; floats are converted to their exact binary value."""
        N, n = Fraction(N), Fraction(n)
        return sum((c * N**p * n**q for (p, q), c in self._terms.items()), Fraction(0))

    def evaluate_float(self, N: float, n: float) -> float:
        return float(sum(float(c) * N**p * n**q for (p, q), c in self._terms.items()))

    # -- ring operations --------------------------------------------------
    def _coerce(self, other) -> "BivariatePoly":
        if isinstance(other, BivariatePoly):
            return other
        if isinstance(other, (int, Fraction)):
            return BivariatePoly.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, v in other._terms.items():
            out[k] = out.get(k, Fraction(0)) + v
        return BivariatePoly(out)

    __radd__ = __add__

    def __neg__(self):
        return BivariatePoly({k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[tuple[int, int], Fraction] = {}
        for (p1, q1), c1 in self._terms.items():
            for (p2, q2), c2 in other._terms.items():
                key = (p1 + p2, q1 + q2)
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return BivariatePoly(out)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative power")
        out = BivariatePoly.constant(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    # -- presentation -----------------------------------------------------
    def __repr__(self):
        return f"BivariatePoly({self._terms!r})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for (p, q) in sorted(self._terms, key=lambda t: (-(t[0] + t[1]), -t[0])):
            c = self._terms[(p, q)]
            mono = "*".join(
                s for s in (
                    "" if p == 0 else ("N" if p == 1 else f"N^{p}"),
                    "" if q == 0 else ("n" if q == 1 else f"n^{q}"),
                ) if s
            )
            mag = abs(c)
            if mono:
                body = mono if mag == 1 else f"{mag}*{mono}"
            else:
                body = str(mag)
            parts.append(("- " if c < 0 else "+ ") + body)
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else "-" + s[2:]

    def to_json(self) -> dict:
        rows = [[p, q, f"{c.numerator}/{c.denominator}"]
                for (p, q), c in sorted(self._terms.items())]
        return {"terms": rows}

    @classmethod
    def from_json(cls, data: dict | str) -> "BivariatePoly":
        if isinstance(data, str):
            data = json.loads(data)
        return cls({(int(p), int(q)): Fraction(c) for p, q, c in data["terms"]})


def coefficient(poly: BivariatePoly, p: int, q: int) -> Fraction:
    """Exact coefficient of ``N**p n**q`` (zero when absent)."""
    return poly.coefficient(p, q)


def half_n_coefficient(poly: BivariatePoly, p: int, q: int) -> Fraction:
    """Coefficient of ``(N/2)**p n**q``, the normalization used for D_{p,q}."""
    return poly.coefficient(p, q) * 2**p


# -- univariate helpers (dict degree -> Fraction) ----------------------------

def _umul(a: dict[int, Fraction], b: dict[int, Fraction]) -> dict[int, Fraction]:
    out: dict[int, Fraction] = {}
    for i, x in a.items():
        for j, y in b.items():
            out[i + j] = out.get(i + j, Fraction(0)) + x * y
    return out


@lru_cache(maxsize=None)
def bernoulli(j: int) -> Fraction:
    """Bernoulli number with the B_1 = +1/2 convention."""
    if j == 0:
        return Fraction(1)
    # sum_{i<=j} C(j+1, i) B_i = j + 1 for the B_1 = +1/2 sequence
    s = sum(comb(j + 1, i) * bernoulli(i) for i in range(j))
    return (Fraction(j + 1) - s) / (j + 1)


@lru_cache(maxsize=None)
def _power_sum_n(j: int) -> tuple[tuple[int, Fraction], ...]:
    if j == 0:
        return ((1, Fraction(1)),)
    if j % 2:
        return ()
    # S_j(h) = sum_{l=1}^{h} l^j = 1/(j+1) sum_i C(j+1, i) B_i h^{j+1-i}
    s_h = {j + 1 - i: Fraction(comb(j + 1, i)) * bernoulli(i) / (j + 1) for i in range(j + 1)}
    # h = (n - 1)/2; full symmetric sum is 2 S_j(h)
    h_poly = {1: Fraction(1, 2), 0: Fraction(-1, 2)}
    out: dict[int, Fraction] = {}
    h_pow = {0: Fraction(1)}
    for d in range(j + 2):
        if d in s_h and s_h[d]:
            for e, c in h_pow.items():
                out[e] = out.get(e, Fraction(0)) + 2 * s_h[d] * c
        h_pow = _umul(h_pow, h_poly)
    return tuple(sorted((e, c) for e, c in out.items() if c))


def power_sum(j: int) -> BivariatePoly:
    """``sum_{l=-(n-1)/2}^{(n-1)/2} l**j`` as a polynomial in n (odd n)."""
    if j < 0:
        raise ValueError("j must be non-negative")
    return BivariatePoly({(0, e): c for e, c in _power_sum_n(j)})


def _l_average(j: int) -> BivariatePoly:
    """``(1/n) sum_l l**j``; the power sum is divisible by n for every j."""
    terms = dict(_power_sum_n(j))
    if terms.get(0):
        raise ArithmeticError(f"power sum {j} not divisible by n")
    return BivariatePoly({(0, e - 1): c for e, c in terms.items()})


def _shifted_product(m: int, k: int) -> dict[tuple[int, int], Fraction]:
    """prod_{A<m}(N/2 + l - A) prod_{B<k-m}(N/2 - l - B) as {(pN, pl): c}."""
    poly: dict[tuple[int, int], Fraction] = {(0, 0): Fraction(1)}

    def times(lin):
        out: dict[tuple[int, int], Fraction] = {}
        for (a, b), c in poly.items():
            for (da, db), d in lin.items():
                key = (a + da, b + db)
                out[key] = out.get(key, Fraction(0)) + c * d
        return {key: v for key, v in out.items() if v}

    for A in range(m):
        poly = times({(1, 0): Fraction(1, 2), (0, 1): Fraction(1), (0, 0): Fraction(-A)})
    for B in range(k - m):
        poly = times({(1, 0): Fraction(1, 2), (0, 1): Fraction(-1), (0, 0): Fraction(-B)})
    return poly


MAX_ORDER = 6


@lru_cache(maxsize=None)
def moment_sum(k: int, m: int) -> BivariatePoly:
    """Ensemble average of the occupation product attached to ``F_m``.

    Returns the exact polynomial in (N, n) equal to
    ``(1/n) sum_{|l|<n/2} prod_{A<m}(N/2+l-A) prod_{B<k-m}(N/2-l-B)``.
    """
    if not (0 <= m <= k <= MAX_ORDER):
        raise ValueError(f"need 0 <= m <= k <= {MAX_ORDER}, got k={k}, m={m}")
    out = BivariatePoly()
    for (pN, pl), c in _shifted_product(m, k).items():
        out = out + BivariatePoly({(pN, 0): c}) * _l_average(pl)
    return out


def direct_moment_sum(k: int, m: int, N: int, n: int) -> Fraction:
    """Brute-force integer summation matching :func:`moment_sum`."""
    h = (n - 1) // 2
    total = 0
    for ell in range(-h, h + 1):
        term = 1
        for A in range(m):
            term *= N // 2 + ell - A
        for B in range(k - m):
            term *= N // 2 - ell - B
        total += term
    return Fraction(total, n)


def from_float(x: float) -> Fraction:
    """Exact rational image of a binary float."""
    return Fraction(float(x))


def poly_sum(polys: Iterable[BivariatePoly]) -> BivariatePoly:
    out = BivariatePoly()
    for p in polys:
        out = out + p
    return out
