"""Typicality calculus for k-particle kernel observables.

Everything is assembled from the overlap table

    I[m, m'] = int A_k(r_1..r_k) conj(Phi_m'(r)) Phi_m(r) dr_1..dr_k

and the scalar ``J = sum_m I[m, m] (k - 2m)``.  ``D_2k0`` and ``D_2k2`` are the
coefficients of ``(N/2)^(2k)`` and ``(N/2)^(2k-2) n^2`` in the leading part of
the ensemble variance; the observable is typical iff ``D_2k0`` vanishes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .modes import MAX_K, FarFieldGaussian, ModePair, PlaneWave, convolution_profile, phis_from_values
from .poly import BivariatePoly, from_float, half_n_coefficient, moment_sum
from .quadrature import trapezoid

TYPICAL_RTOL = 1e-10
CONSISTENCY_RTOL = 1e-8


class NotTypicalError(ValueError):
    """Scaling regimes are undefined for an observable that is not typical."""


class InternalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DeltaComb:
    """Kernel ``prod_i delta(r_{i+1} - r_i - x_i)`` for k = len(offsets) + 1.

    With ``smearing`` set, each delta becomes a normalized Gaussian of that
    width and coincident or zero offsets are allowed.
    """

    offsets: tuple[float, ...] = ()
    smearing: float | None = None

    def __post_init__(self):
        offs = tuple(float(x) for x in self.offsets)
        object.__setattr__(self, "offsets", offs)
        if self.k > MAX_K:
            raise ValueError(f"k={self.k} exceeds the cap {MAX_K}")
        if self.smearing is None:
            pts = (0.0,) + tuple(itertools.accumulate(offs))
            for i, j in itertools.combinations(range(len(pts)), 2):
                if abs(pts[i] - pts[j]) < 1e-12:
                    raise ValueError(
                        "delta-comb points coincide; use distinct nonzero offsets or enable smearing"
                    )
        elif self.smearing <= 0:
            raise ValueError("smearing width must be positive")

    @property
    def k(self) -> int:
        return len(self.offsets) + 1

    @property
    def points(self) -> np.ndarray:
        """Positions of the k densities relative to the first one."""
        return np.concatenate([[0.0], np.cumsum(self.offsets)])

    def describe(self) -> str:
        s = f"c{self.k}:" + ",".join(f"x{i + 1}={x:g}" for i, x in enumerate(self.offsets))
        return s + (f",eps={self.smearing:g}" if self.smearing else "")


@dataclass(frozen=True, eq=False)
class GridKernel:
    """Kernel tabulated on the uniform periodic grid ``arange(G)/G`` in each of k axes."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or len(set(v.shape)) != 1:
            raise ValueError("grid kernel must be a k-dimensional array with equal axes")
        if v.ndim > MAX_K:
            raise ValueError(f"k={v.ndim} exceeds the cap {MAX_K}")
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def describe(self) -> str:
        return f"grid:k={self.k},G={self.size}"


KernelSpec = DeltaComb | GridKernel


def parse_kernel(desc: str) -> DeltaComb:
    """``c2:x=0.13``, ``c3:x1=0.13,x2=0.29``, optional ``eps=`` smearing width."""
    name, _, rest = desc.partition(":")
    name = name.strip().lower()
    if len(name) < 2 or name[0] != "c" or not name[1:].isdigit():
        raise ValueError(f"unknown kernel {name!r}; expected c<k>")
    k = int(name[1:])
    if not 1 <= k <= MAX_K:
        raise ValueError(f"kernel order {k} outside 1..{MAX_K}")
    kv = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"malformed kernel item {item!r}")
        kv[key.strip()] = float(val)
    if k == 2 and "x" in kv:
        kv["x1"] = kv.pop("x")
    offsets = []
    for i in range(1, k):
        try:
            offsets.append(kv.pop(f"x{i}"))
        except KeyError:
            raise ValueError(f"kernel {desc!r} is missing offset x{i}") from None
    eps = kv.pop("eps", None)
    if kv:
        raise ValueError(f"unknown kernel keys {sorted(kv)}")
    return DeltaComb(tuple(offsets), smearing=eps)


# -- I and J integrals ------------------------------------------------------------

def _hermitize(table: np.ndarray) -> np.ndarray:
    """Keep the upper triangle, mirror it conjugated, force a real diagonal."""
    out = np.triu(table, 1)
    out = out + out.conj().T
    out[np.diag_indices_from(out)] = table.diagonal().real
    return out


def plane_wave_point_table(modes: PlaneWave, offsets: Sequence[float]) -> np.ndarray:
    """Closed-form ``int dr conj(Phi_m') Phi_m (r + offsets)`` on the unit box.

    Off-diagonal entries carry ``exp(-2i (m'-m) k0 r)`` and integrate to zero.
    Diagonal entries are ``|sum_S exp(i k0 Delta_S)|^2`` with
    ``Delta_S = sum_{s in S} y_s - sum_{s not in S} y_s``; the cosine sum is
    accumulated with :func:`math.fsum` so it is independent of ordering and
    therefore exactly symmetric under ``m -> k - m``.
    """
    y = [float(v) for v in offsets]
    k = len(y)
    total = math.fsum(y)
    table = np.zeros((k + 1, k + 1), dtype=complex)
    for m in range(k + 1):
        deltas = [2 * math.fsum(y[i] for i in S) - total for S in itertools.combinations(range(k), m)]
        cosines = [math.cos(modes.k0 * (d1 - d2)) for d1 in deltas for d2 in deltas]
        table[m, m] = math.fsum(cosines)
    return table


def point_table(modes: ModePair, offsets: Sequence[float], tol: float = 1e-10,
                method: str = "auto") -> np.ndarray:
    """``T[m, m'] = int dr conj(Phi_m') Phi_m`` at points ``r + offsets``.

    Offsets may repeat.  Plane waves use the closed form unless
    ``method='quadrature'``; everything else uses the doubling trapezoid rule
    on the periodic cell or the mode window.
    """
    offsets = np.asarray(offsets, dtype=float)
    k = offsets.size
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(modes, PlaneWave) and method != "quadrature":
        return plane_wave_point_table(modes, offsets)
    if method == "closed":
        raise ValueError("closed form only exists for plane waves")

    def integrand(r):
        pts = r[None, :] + offsets[:, None]
        va, vb = modes.evaluate(pts)
        phis = phis_from_values(va, vb)
        return (phis[:, None, :] * phis[None, :, :].conj()).reshape((k + 1) ** 2, -1)

    lo, hi = modes.window()
    n0 = 64 if modes.domain == "periodic" else 1024
    vals, _ = trapezoid(integrand, lo, hi, tol=tol, n0=n0, min_doublings=2)
    return _hermitize(vals.reshape(k + 1, k + 1))


def _gauss_nodes(smearing: float, order: int = 16):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x * smearing, w / w.sum()


def integral_table(kernel: KernelSpec, modes: ModePair, tol: float = 1e-10,
                   method: str = "auto") -> np.ndarray:
    """The full Hermitian ``(k+1) x (k+1)`` table of ``I[m, m']``."""
    if isinstance(kernel, DeltaComb):
        if kernel.smearing is None:
            return point_table(modes, kernel.points, tol=tol, method=method)
        nodes, weights = _gauss_nodes(kernel.smearing)
        k = kernel.k
        table = np.zeros((k + 1, k + 1), dtype=complex)
        for combo in itertools.product(range(nodes.size), repeat=k - 1):
            offs = np.array(kernel.offsets) + nodes[list(combo)]
            pts = np.concatenate([[0.0], np.cumsum(offs)])
            table += np.prod(weights[list(combo)]) * point_table(modes, pts, tol=tol, method=method)
        return _hermitize(table)
    if isinstance(kernel, GridKernel):
        if modes.domain != "periodic":
            raise ValueError("grid kernels are defined on the periodic unit cell only")
        G, k = kernel.size, kernel.k
        axes = np.meshgrid(*([np.arange(G) / G] * k), indexing="ij")
        pts = np.stack([ax.ravel() for ax in axes])
        va, vb = modes.evaluate(pts)
        phis = phis_from_values(va, vb)
        w = kernel.values.ravel() / G**k
        table = np.einsum("ar,br,r->ab", phis, phis.conj(), w)
        return _hermitize(table)
    raise TypeError(f"unsupported kernel {kernel!r}")


def integral_I(kernel: KernelSpec, modes: ModePair, m: int, m_prime: int, **kw) -> complex:
    """``int A_k conj(Phi_m') Phi_m``."""
    k = kernel.k
    if not (0 <= m <= k and 0 <= m_prime <= k):
        raise ValueError(f"indices ({m}, {m_prime}) outside 0..{k}")
    return complex(integral_table(kernel, modes, **kw)[m, m_prime])


def j_from_table(table: np.ndarray) -> float:
    k = table.shape[0] - 1
    return float(sum(table[m, m].real * (k - 2 * m) for m in range(k + 1)))


def integral_J(kernel: KernelSpec, modes: ModePair, **kw) -> float:
    """``int A_k sum_m F_m (k - 2m)``."""
    return j_from_table(integral_table(kernel, modes, **kw))


# -- D coefficients -----------------------------------------------------------------

def _offdiag_terms(table: np.ndarray):
    """Yield ``(M, I[M-m, M-m'] I[m, m'])`` over m != m' in the cluster bounds."""
    k = table.shape[0] - 1
    for M in range(2 * k + 1):
        lo, hi = max(0, M - k), min(M, k)
        for m in range(lo, hi + 1):
            for mp in range(lo, hi + 1):
                if m != mp:
                    yield M, table[M - m, M - mp] * table[m, mp]


def _real(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > 1e-10 * max(abs(value.real), scale, 1e-300):
        raise InternalConsistencyError(f"{what} has imaginary part {value.imag!r}")
    return float(value.real)


def natural_scale(table: np.ndarray) -> float:
    """``sum_m |I[m, m]|^2``, the yardstick for the typicality threshold."""
    return float(np.sum(np.abs(table.diagonal()) ** 2))


def d2k0_from_table(table: np.ndarray) -> float:
    total = sum((t for _, t in _offdiag_terms(table)), 0j)
    return _real(complex(total), natural_scale(table), "D_2k0")


def d2k2_from_table(table: np.ndarray) -> float:
    k = table.shape[0] - 1
    J = j_from_table(table)
    total = sum((t * (2 * k * k - k * (4 * M + 1) + 2 * M * M) for M, t in _offdiag_terms(table)), 0j)
    return (J * J + _real(complex(total), natural_scale(table), "D_2k2")) / 12


def coefficient_D_2k0(kernel: KernelSpec, modes: ModePair, **kw) -> float:
    return d2k0_from_table(integral_table(kernel, modes, **kw))


def coefficient_D_2k2(kernel: KernelSpec, modes: ModePair, **kw) -> float:
    return d2k2_from_table(integral_table(kernel, modes, **kw))


# -- exact variance polynomial ------------------------------------------------------

def _exact_table(table: np.ndarray):
    return [[(from_float(v.real), from_float(v.imag)) for v in row] for row in table]


def variance_polynomial_from_table(table: np.ndarray, check: bool = True) -> BivariatePoly:
    """Leading ensemble variance as an exact polynomial in (N, n).

    Built as ``sum_M K_M <G_2k>_M - (sum_m I_mm <G_k>_m)^2`` where the
    ``<G_j>_m`` are the exact moment-sum polynomials and
    ``K_M = sum_{m, m'} I[M-m, M-m'] I[m, m']`` is the kernel integral of
    ``F_M`` over 2k points after cluster decomposition.  The float table is
    converted to exact rationals first, so cancellations are exact.
    """
    k = table.shape[0] - 1
    if 2 * k > MAX_K:
        raise ValueError(f"variance polynomial needs 2k <= {MAX_K}")
    ex = _exact_table(table)
    poly = BivariatePoly()
    for M in range(2 * k + 1):
        lo, hi = max(0, M - k), min(M, k)
        re = Fraction(0)
        im = Fraction(0)
        for m in range(lo, hi + 1):
            for mp in range(lo, hi + 1):
                a_re, a_im = ex[M - m][M - mp]
                b_re, b_im = ex[m][mp]
                re += a_re * b_re - a_im * b_im
                im += a_re * b_im + a_im * b_re
        if im != 0:
            raise InternalConsistencyError(f"K_{M} is not real (imaginary part {float(im)!r})")
        poly = poly + moment_sum(2 * k, M) * re
    mean = BivariatePoly()
    for m in range(k + 1):
        mean = mean + moment_sum(k, m) * ex[m][m][0]
    poly = poly - mean * mean
    if check:
        scale = natural_scale(table)
        for (p, q), closed in (((2 * k, 0), d2k0_from_table(table)), ((2 * k - 2, 2), d2k2_from_table(table))):
            if p < 0:
                continue
            got = float(half_n_coefficient(poly, p, q))
            if abs(got - closed) > CONSISTENCY_RTOL * max(abs(closed), scale):
                raise InternalConsistencyError(
                    f"coefficient ({p},{q}) = {got!r} disagrees with closed form {closed!r}"
                )
    return poly


def variance_polynomial(kernel: KernelSpec, modes: ModePair, **kw) -> BivariatePoly:
    if kernel.k > 3:
        raise ValueError("variance polynomial is available for k <= 3")
    return variance_polynomial_from_table(integral_table(kernel, modes, **kw))


# -- report and regimes --------------------------------------------------------------

@dataclass
class TypicalityReport:
    k: int
    kernel: str
    mode_variant: str
    I_table: np.ndarray
    J_value: float
    D_2k0: float
    D_2k2: float
    scale: float
    verdict: str
    regime: dict | None = None
    extras: dict = field(default_factory=dict)

    @property
    def typical(self) -> bool:
        return self.verdict == "typical"

    def to_json(self) -> dict:
        return {
            "schema": "twomode.typicality/v1",
            "k": self.k,
            "kernel": self.kernel,
            "mode_variant": self.mode_variant,
            "I_table": [[[float(v.real), float(v.imag)] for v in row] for row in self.I_table],
            "J": self.J_value,
            "D_2k0": self.D_2k0,
            "D_2k2": self.D_2k2,
            "scale": self.scale,
            "verdict": self.verdict,
            "regime": self.regime,
            **self.extras,
        }


def verdict_from_table(table: np.ndarray, rtol: float = TYPICAL_RTOL) -> str:
    d = d2k0_from_table(table)
    return "typical" if abs(d) < rtol * natural_scale(table) else "not typical"


def _describe_modes(modes) -> str:
    if isinstance(modes, PlaneWave):
        return f"planewave:q={modes.q}"
    if isinstance(modes, FarFieldGaussian):
        return f"gaussian:d={modes.separation:g},sigma={modes.sigma:g},t={modes.t:g}"
    return type(modes).__name__.lower()


def typicality_report(kernel: KernelSpec, modes: ModePair, alpha: float | None = None,
                      **kw) -> TypicalityReport:
    table = integral_table(kernel, modes, **kw)
    d0 = d2k0_from_table(table)
    d2 = d2k2_from_table(table)
    scale = natural_scale(table)
    report = TypicalityReport(
        k=kernel.k, kernel=kernel.describe(), mode_variant=_describe_modes(modes),
        I_table=table, J_value=j_from_table(table), D_2k0=d0, D_2k2=d2, scale=scale,
        verdict=verdict_from_table(table),
    )
    if isinstance(modes, FarFieldGaussian):
        prof = convolution_profile(modes)
        report.extras["separation"] = {
            "z0": prof.z0,
            "F2_ab": prof.curvature,
            "ratio": prof.separation_ratio,
            "separated": prof.separated(),
            "suppression_exponent": prof.suppression_exponent,
            "suppression_estimate": math.exp(-prof.suppression_exponent),
        }
    if report.typical:
        report.regime = classify_regime(report, 0.5 if alpha is None else alpha)
    return report


def classify_regime(report: TypicalityReport, alpha: float) -> dict:
    """Predicted large-N scaling of the relative fluctuations for ``n ~ N^alpha``.

    Returns the exponent of ``dA / A`` and of ``dA^2 / A^2`` together with the
    branch that dominates.
    """
    if not report.typical:
        raise NotTypicalError("observable is not typical; relative fluctuations stay O(1)")
    subleading_zero = abs(report.D_2k2) < TYPICAL_RTOL * report.scale
    if subleading_zero:
        crossover = 0.75
        if alpha <= crossover:
            branch, rel = "ensemble-independent N^(-1/2)", -0.5
        else:
            branch, rel = "ensemble-dependent (n/N)^4", 2 * (alpha - 1)
    else:
        crossover = 0.5
        if alpha <= crossover:
            branch, rel = "ensemble-independent N^(-1/2)", -0.5
        else:
            branch, rel = "ensemble-dependent N^(alpha-1)", alpha - 1
    return {
        "alpha": alpha,
        "crossover_alpha": crossover,
        "branch": branch,
        "relative_exponent": rel,
        "variance_ratio_exponent": 2 * rel,
        "D_2k2_vanishes": subleading_zero,
    }
