"""Integrated density correlations as two-mode operators.

The normal-ordered k-point density product integrated over the reference
position is

    C_k = int dr G_k(r + y_1, ..., r + y_k)
        = sum_{p, r} I[r, p] a+^p b+^(k-p) a^r b^(k-r),

with ``y`` the cumulative offsets and ``I`` the overlap table from
:mod:`twomode.typicality`.  Only the two modes are occupied, so this is exact.

The square of ``C_k`` is not a two-mode object: commuting field operators past
each other produces delta functions of the full field.  :func:`second_moment`
builds ``C_k^2`` by Wick's theorem, so that ensemble variances include the
shot-noise contribution of the continuum.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .fock import NormalMonomial, SystemParams, TwoModeOperator, microcanonical_trace
from .modes import ModePair, PlaneWave
from .typicality import DeltaComb, GridKernel, KernelSpec, integral_table, point_table

CURVE_SCHEMA = "# twomode.correlation-curve/v1"


def operator_from_table(table: np.ndarray) -> TwoModeOperator:
    """``sum_{p, r} T[r, p] a+^p b+^(k-p) a^r b^(k-r)`` for a Hermitian table."""
    k = table.shape[0] - 1
    monos = [
        NormalMonomial(p, k - p, r, k - r, complex(table[r, p]))
        for p in range(k + 1) for r in range(k + 1)
        if table[r, p] != 0
    ]
    return TwoModeOperator(monos, hermitian=True)


def integrated_G(modes: ModePair, points: Sequence[float], **kw) -> TwoModeOperator:
    """``int dr G_j(r + points)``; points may coincide."""
    return operator_from_table(point_table(modes, points, **kw))


@dataclass(frozen=True, eq=False)
class CorrelationObservable:
    k: int
    offsets: tuple[float, ...]
    modes: ModePair
    operator: TwoModeOperator
    includes_lower_order: bool = False
    kernel: KernelSpec | None = None

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.offsets)])


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _gaussian_delta(d: float, width: float) -> float:
    return math.exp(-d * d / (2 * width * width)) / (math.sqrt(2 * math.pi) * width)


def _contact_terms(modes: ModePair, points: np.ndarray, width: float) -> TwoModeOperator:
    """Lower-order pieces of ``rho(p_1)...rho(p_k)`` with smeared deltas.

    Each set partition with fewer than k blocks contributes ``G_blocks`` at the
    block representatives, weighted by the smeared deltas tying every other
    block member to its representative.
    """
    k = len(points)
    out = TwoModeOperator(hermitian=True)
    for part in _set_partitions(list(range(k))):
        if len(part) == k:
            continue
        weight = 1.0
        for block in part:
            for j in block[1:]:
                weight *= _gaussian_delta(points[j] - points[block[0]], width)
        if weight == 0.0:
            continue
        reps = [points[block[0]] for block in part]
        out = out + integrated_G(modes, reps).scaled(weight)
    return out


def assemble_C_k(modes: ModePair, offsets: Sequence[float] = (), smearing: float | None = None,
                 include_lower_order: bool = False, contact_width: float | None = None,
                 **kw) -> CorrelationObservable:
    """Integrated k-point density correlation with relative offsets ``x_i``.

    Parameters
    ----------
    modes : ModePair
    offsets : sequence of float
        ``x_1 .. x_{k-1}``; must be distinct and nonzero unless ``smearing``.
    smearing : float, optional
        Gaussian width replacing each delta in the kernel.
    include_lower_order : bool
        Add the normal-ordering contact terms ``delta(p_i - p_j) G_{k-1}``,
        with deltas smeared to ``contact_width``.  They vanish as the width
        goes to zero for distinct offsets.
    """
    kernel = DeltaComb(tuple(offsets), smearing=smearing)
    if kernel.k > 3:
        raise ValueError("exact assembly is limited to k <= 3")
    op = operator_from_table(integral_table(kernel, modes, **kw))
    if include_lower_order:
        if contact_width is None or contact_width <= 0:
            raise ValueError("include_lower_order needs a positive contact_width")
        op = op + _contact_terms(modes, kernel.points, contact_width)
    return CorrelationObservable(kernel.k, kernel.offsets, modes, op, include_lower_order, kernel)


def kernel_observable(kernel: KernelSpec, modes: ModePair, **kw) -> CorrelationObservable:
    """Observable for an arbitrary kernel (grid kernels included)."""
    op = operator_from_table(integral_table(kernel, modes, **kw))
    offs = kernel.offsets if isinstance(kernel, DeltaComb) else ()
    return CorrelationObservable(kernel.k, tuple(offs), modes, op, False, kernel)


def _partial_matchings(k: int):
    """All partial injective maps from annihilator slots to creator slots."""
    for size in range(1, k + 1):
        for ann in itertools.combinations(range(k), size):
            for cre in itertools.permutations(range(k), size):
                yield tuple(zip(ann, cre))


def _wrap(d: float, periodic: bool) -> float:
    return d - round(d) if periodic else d


def second_moment(obs: CorrelationObservable, contact_width: float | None = None,
                  **kw) -> TwoModeOperator:
    """Full-field ``C_k^2`` as a two-mode operator.

    Expanding ``int dr ds G_k(r + y) G_k(s + y)`` by Wick's theorem gives
    ``:C C:`` plus one term per partial matching ``mu`` of annihilators at
    ``r + y_i`` to creators at ``s + y_j``.  A matching forces
    ``s = r + y_i - y_j`` for every pair, so all pairs must share the same
    shift ``D`` (modulo the cell on periodic domains).  What remains is
    ``int dr G_{2k-|mu|}`` at ``y`` together with ``D + y_j`` for the
    unmatched creator slots ``j``; the ``|mu| - 1`` surplus deltas are
    ``delta(0)`` and are replaced by the contact weight ``1/(2 sqrt(pi) w)``
    for a Gaussian of width ``w``.  Without ``contact_width`` those terms,
    of order ``N^(2k-2)``, are dropped.

    For a one-body grid kernel the only contraction gives ``int A^2 rho``.
    """
    op = obs.operator
    total = op.normal_product(op)
    kernel = obs.kernel
    if isinstance(kernel, GridKernel):
        if kernel.k != 1:
            raise ValueError("second moments of grid kernels are implemented for k = 1 only")
        sq = GridKernel(kernel.values ** 2)
        return total + operator_from_table(integral_table(sq, obs.modes, **kw))
    if obs.includes_lower_order or (kernel is not None and kernel.smearing is not None):
        raise ValueError("second moments need an unsmeared delta-comb observable")
    y = obs.points
    k = obs.k
    periodic = obs.modes.domain == "periodic"
    delta0 = None if contact_width is None else 1.0 / (2 * math.sqrt(math.pi) * contact_width)
    cache: dict[tuple, TwoModeOperator] = {}
    for mu in _partial_matchings(k):
        shifts = [_wrap(y[i] - y[j], periodic) for i, j in mu]
        D = shifts[0]
        if any(abs(s - D) > 1e-12 for s in shifts[1:]):
            continue
        if len(mu) > 1 and delta0 is None:
            continue
        matched = {j for _, j in mu}
        pts = tuple(y) + tuple(D + y[j] for j in range(k) if j not in matched)
        key = tuple(sorted(round(p, 14) for p in pts))
        if key not in cache:
            cache[key] = integrated_G(obs.modes, pts, **kw)
        weight = 1.0 if len(mu) == 1 else delta0 ** (len(mu) - 1)
        total = total + cache[key].scaled(weight)
    return TwoModeOperator(total.monomials, hermitian=True)


def mean_C2_leading(modes: ModePair, x: float, N: float, **kw) -> float:
    """``(N^2 / 4) sum_m int dr F_m(r, r + x)``."""
    table = point_table(modes, [0.0, x], **kw)
    return float(N) ** 2 / 4 * float(np.sum(table.diagonal().real))


def plane_wave_C2_mean(x: float, N: float, q: int = 1) -> float:
    return float(N) ** 2 * (1 + 0.5 * math.cos(2 * 2 * math.pi * q * x))


def classical_pattern(N: float, k0: float, phi: float):
    """Fully modulated fringe density ``2 N cos^2(k0 x + phi)``.

    Normalized to ``N`` particles on the unit cell (``k0`` a multiple of
    ``pi``); its autocorrelation is ``N^2 (1 + cos(2 k0 x) / 2)`` for every
    ``phi``.
    """
    def rho(x):
        return 2.0 * N * np.cos(k0 * np.asarray(x, dtype=float) + phi) ** 2
    return rho


def autocorrelation(rho, x, points: int = 4096) -> np.ndarray:
    """``int_0^1 rho(r) rho(r + x) dr`` by the periodic trapezoid rule."""
    r = np.arange(points) / points
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.array([np.mean(rho(r) * rho(r + xi)) for xi in x])


def correlation_curve(modes: ModePair, xs: Sequence[float], params: SystemParams,
                      run_values: Sequence[float] | None = None) -> list[dict]:
    rows = []
    for i, x in enumerate(xs):
        obs = assemble_C_k(modes, (x,))
        row = {
            "x": float(x),
            "exact_trace": microcanonical_trace(obs.operator, params),
            "leading_formula": mean_C2_leading(modes, x, params.N),
        }
        if run_values is not None:
            row["run_value"] = float(run_values[i])
        rows.append(row)
    return rows


def write_correlation_curve(path: str | Path, rows: list[dict]) -> None:
    cols = ["x", "exact_trace", "leading_formula"] + (["run_value"] if rows and "run_value" in rows[0] else [])
    with open(path, "w", newline="") as fh:
        fh.write(CURVE_SCHEMA + "\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({c: repr(row[c]) for c in cols})


__all__ = [
    "CorrelationObservable",
    "assemble_C_k",
    "autocorrelation",
    "classical_pattern",
    "correlation_curve",
    "integrated_G",
    "kernel_observable",
    "mean_C2_leading",
    "operator_from_table",
    "plane_wave_C2_mean",
    "second_moment",
    "write_correlation_curve",
]
