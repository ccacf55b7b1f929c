"""Random-state sampling, scaling scans and single-run pattern simulation.

Random streams are derived from a 64-bit master seed with
``SeedSequence(seed, spawn_key=(task, index))`` feeding a Philox generator.
Every batch, scan point and pattern run owns its key, so results do not depend
on how tasks are scheduled.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .correlations import CorrelationObservable
from .fock import (
    StateVector,
    SystemParams,
    TwoModeOperator,
    microcanonical_trace,
    to_band_matrix,
    variance_components,
)
from .modes import ModePair, PlaneWave

SCAN_SCHEMA = "# twomode.scan/v1"
PATTERN_SCHEMA = "# twomode.pattern/v1"
SCAN_COLUMNS = ("N", "n", "alpha", "mean", "var", "relfluct", "stderr")

# spawn-key namespaces
_ENSEMBLE, _SCAN, _PATTERN = 1, 2, 3


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for task ``keys`` under a master ``seed``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def worker_count(default: int = 1) -> int:
    """Thread/process budget from ``TWOMODE_THREADS``."""
    raw = os.environ.get("TWOMODE_THREADS")
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"TWOMODE_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def round_to_odd(x: float) -> int:
    """Nearest odd integer; every real in ``[2m, 2m + 2)`` is closest to ``2m + 1``."""
    return max(1, 2 * int(math.floor(x / 2)) + 1)


def sample_states(params: SystemParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` uniform random unit vectors in H_n, as columns of an ``(n, size)`` array."""
    z = rng.standard_normal((params.n, size)) + 1j * rng.standard_normal((params.n, size))
    return z / np.linalg.norm(z, axis=0)


def sample_state(params: SystemParams, rng: np.random.Generator) -> StateVector:
    """One state drawn from the unitarily invariant measure on H_n."""
    return StateVector(params, sample_states(params, rng, 1)[:, 0])


# -- ensemble statistics -------------------------------------------------------

def _operator(obs) -> TwoModeOperator:
    return obs.operator if isinstance(obs, CorrelationObservable) else obs


@dataclass
class EnsembleConfig:
    params: SystemParams
    samples: int
    seed: int
    observable: CorrelationObservable | TwoModeOperator
    second_moment: TwoModeOperator | None = None
    batches: int = 20

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.batches < 1:
            raise ValueError("batches must be >= 1")


@dataclass
class EnsembleStatistics:
    mean: float
    variance: float
    mean_stderr: float
    variance_stderr: float
    spread: float
    quantum_variance: float
    samples: int
    warning: str | None = None


def per_state_moments(op: TwoModeOperator, states: np.ndarray, params: SystemParams,
                      second_moment: TwoModeOperator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``<Phi|A|Phi>`` and ``<Phi|A^2|Phi>`` for every column of ``states``."""
    pad = op.bandwidth
    mat = to_band_matrix(op, params, pad=pad)
    wide = np.zeros((mat.dim, states.shape[1]), dtype=complex)
    start = -params.half_width - mat.lo            # zero when the widened range is clipped
    wide[start: start + params.n] = states
    a_phi = mat.matmat(wide)
    first = np.einsum("ib,ib->b", wide.conj(), a_phi).real
    if second_moment is None:
        second = np.einsum("ib,ib->b", a_phi.conj(), a_phi).real
    else:
        m2 = to_band_matrix(second_moment, params, pad=pad)
        second = np.einsum("ib,ib->b", wide.conj(), m2.matmat(wide)).real
    return first, second


def ensemble_statistics(config: EnsembleConfig) -> EnsembleStatistics:
    """Monte Carlo estimate of ``Tr(rho_n A)`` and ``Tr(rho_n A^2) - Tr(rho_n A)^2``.

    Each batch draws from its own stream.  Standard errors of both estimates
    come from the spread of leave-one-batch-out values.
    """
    params = config.params
    op = _operator(config.observable)
    batches = min(config.batches, config.samples)
    sizes = np.full(batches, config.samples // batches)
    sizes[: config.samples % batches] += 1
    firsts, seconds = [], []
    for b, size in enumerate(sizes):
        rng = rng_stream(config.seed, _ENSEMBLE, b)
        f, s = per_state_moments(op, sample_states(params, rng, int(size)), params, config.second_moment)
        firsts.append(f)
        seconds.append(s)
    f_all = np.concatenate(firsts)
    s_all = np.concatenate(seconds)
    mean = float(f_all.mean())
    variance = float(s_all.mean() - mean**2)
    warning = None
    if batches < 2:
        mean_se = var_se = float("nan")
        warning = "fewer than two batches; standard errors unavailable"
    else:
        sums_f = np.array([f.sum() for f in firsts])
        sums_s = np.array([s.sum() for s in seconds])
        loo_f = (sums_f.sum() - sums_f) / (config.samples - sizes)
        loo_s = (sums_s.sum() - sums_s) / (config.samples - sizes)
        loo_v = loo_s - loo_f**2
        jk = (batches - 1) / batches
        mean_se = float(math.sqrt(jk * np.sum((loo_f - loo_f.mean()) ** 2)))
        var_se = float(math.sqrt(jk * np.sum((loo_v - loo_v.mean()) ** 2)))
        if config.samples < 50 * batches:
            warning = f"only {config.samples} samples over {batches} batches; errors are rough"
    if warning:
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return EnsembleStatistics(
        mean=mean, variance=variance, mean_stderr=mean_se, variance_stderr=var_se,
        spread=float(f_all.var()), quantum_variance=float(np.mean(s_all - f_all**2)),
        samples=config.samples, warning=warning,
    )


# -- scaling scans ------------------------------------------------------------

@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float

    def contains(self, value: float, tol: float) -> bool:
        return abs(self.slope - value) <= tol


def fit_loglog(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x`` with a t-interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("slope fit needs at least 3 grid points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    res = stats.linregress(np.log(x), np.log(y))
    half = stats.t.ppf(0.5 + confidence / 2, x.size - 2) * res.stderr
    return SlopeFit(float(res.slope), float(res.intercept), float(res.stderr),
                    float(res.slope - half), float(res.slope + half))


@dataclass
class ScanPoint:
    N: int
    n: int
    alpha: float
    mean: float
    var: float
    relfluct: float
    stderr: float = 0.0
    quantum: float = float("nan")
    ensemble: float = float("nan")

    @property
    def variance_ratio(self) -> float:
        return self.var / self.mean**2


@dataclass
class ScalingScan:
    alpha: float
    points: list[ScanPoint]
    fit: SlopeFit
    method: str
    variance_ratio_fit: SlopeFit | None = None
    component_ratio_fit: SlopeFit | None = None

    def summary(self) -> dict:
        out = {
            "schema": "twomode.scan-summary/v1",
            "alpha": self.alpha,
            "method": self.method,
            "slope": self.fit.slope,
            "slope_stderr": self.fit.stderr,
            "ci": [self.fit.ci_low, self.fit.ci_high],
        }
        if self.variance_ratio_fit:
            out["variance_ratio_slope"] = self.variance_ratio_fit.slope
        if self.component_ratio_fit:
            out["ensemble_to_quantum_slope"] = self.component_ratio_fit.slope
        return out


EXACT_DIM_LIMIT = 2_000_000


def geometric_grid(lo: int, hi: int, points: int | None = None) -> list[int]:
    """Even particle numbers spaced geometrically; powers of two by default."""
    if points is None:
        lo_e, hi_e = int(round(math.log2(lo))), int(round(math.log2(hi)))
        return [2**e for e in range(lo_e, hi_e + 1)]
    vals = np.geomspace(lo, hi, points)
    return sorted({int(2 * round(v / 2)) for v in vals})


def _n_for(N: int, alpha: float) -> int:
    return min(round_to_odd(N**alpha), N + 1)


def scan_point(obs, N: int, n: int, alpha: float, second_moment=None, method: str = "exact",
               samples: int = 2000, seed: int = 0, index: int = 0) -> ScanPoint:
    params = SystemParams(N, n)
    op = _operator(obs)
    if method == "exact":
        mean = microcanonical_trace(op, params)
        quantum, spread = variance_components(op, params, second_moment)
        var = quantum + spread
        return ScanPoint(N, n, alpha, mean, var, math.sqrt(var) / abs(mean), 0.0, quantum, spread)
    if method == "montecarlo":
        st = ensemble_statistics(EnsembleConfig(params, samples, seed ^ (index << 20), op, second_moment))
        rel = math.sqrt(max(st.variance, 0.0)) / abs(st.mean)
        rel_se = 0.5 * rel * st.variance_stderr / max(st.variance, 1e-300)
        return ScanPoint(N, n, alpha, st.mean, st.variance, rel, rel_se, st.quantum_variance, st.spread)
    raise ValueError(f"unknown method {method!r}")


def scaling_scan(alpha: float, N_grid: Sequence[int], observable, second_moment=None,
                 method: str = "auto", samples: int = 2000, seed: int = 0) -> ScalingScan:
    """Relative fluctuation ``dA/A`` along ``n = round_to_odd(N^alpha)``.

    ``method='auto'`` uses exact traces whenever the widened band fits under
    :data:`EXACT_DIM_LIMIT` and Monte Carlo otherwise.
    """
    N_grid = [int(N) for N in N_grid]
    if len(N_grid) < 3:
        raise ValueError("scaling scan needs at least 3 grid points")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    op = _operator(observable)
    points = []
    methods = set()
    for i, N in enumerate(N_grid):
        n = _n_for(N, alpha)
        m = method
        if m == "auto":
            m = "exact" if n + 4 * op.bandwidth < EXACT_DIM_LIMIT else "montecarlo"
        methods.add(m)
        points.append(scan_point(op, N, n, alpha, second_moment, m, samples, seed, i))
    Ns = [p.N for p in points]
    fit = fit_loglog(Ns, [p.relfluct for p in points])
    vr = fit_loglog(Ns, [p.variance_ratio for p in points])
    comp = None
    if all(p.quantum > 0 and p.ensemble > 0 for p in points):
        comp = fit_loglog(Ns, [p.ensemble / p.quantum for p in points])
    return ScalingScan(alpha, points, fit, "+".join(sorted(methods)), vr, comp)


def n_sweep_exponent(observable, N: int, ns: Sequence[int], second_moment=None) -> tuple[SlopeFit, np.ndarray]:
    """Exponent of ``d^2(N, n) - d^2(N, 1)`` in n at fixed N."""
    op = _operator(observable)
    base = sum(variance_components(op, SystemParams(N, 1), second_moment))
    excess = np.array([sum(variance_components(op, SystemParams(N, n), second_moment)) - base for n in ns])
    return fit_loglog(ns, excess), excess


@dataclass
class Crossover:
    alphas: list[float]
    slopes: list[float]
    alpha_star: float | None

    def between(self, lo: float, hi: float) -> bool:
        return self.alpha_star is not None and lo <= self.alpha_star <= hi


def detect_crossover(scans: Sequence[ScalingScan]) -> Crossover:
    """Locate where the ensemble part overtakes the quantum part.

    Uses the log-log slope in N of the ratio of the ensemble spread to the
    averaged quantum variance; it changes sign at the crossover exponent.
    The crossing is found by linear interpolation between neighbouring scans.
    """
    scans = sorted(scans, key=lambda s: s.alpha)
    alphas = [s.alpha for s in scans]
    slopes = []
    for s in scans:
        if s.component_ratio_fit is None:
            raise ValueError(f"scan at alpha={s.alpha} lacks a variance decomposition")
        slopes.append(s.component_ratio_fit.slope)
    star = None
    for (a0, s0), (a1, s1) in zip(zip(alphas, slopes), zip(alphas[1:], slopes[1:])):
        if s0 < 0 <= s1:
            star = a0 + (a1 - a0) * (-s0) / (s1 - s0)
            break
    return Crossover(alphas, slopes, star)


def write_scan_csv(path: str | Path, scan: ScalingScan) -> Path:
    """CSV with the fixed scan columns plus a sibling ``.json`` summary."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(SCAN_SCHEMA + "\n")
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for p in scan.points:
            w.writerow([p.N, p.n, repr(p.alpha), repr(p.mean), repr(p.var), repr(p.relfluct), repr(p.stderr)])
    footer = path.with_suffix(".json")
    footer.write_text(json.dumps(scan.summary(), indent=2) + "\n")
    return footer


# -- interference patterns -----------------------------------------------------

class PatternFitError(RuntimeError):
    pass


GRID_POINTS = 2**12


@dataclass
class PatternResult:
    positions: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    V: float
    phi: float
    period: float
    chi2: float
    dof: int
    max_norm_error: float = 0.0

    def fit_record(self) -> dict:
        return {
            "schema": "twomode.pattern-fit/v1",
            "V": self.V,
            "phi": self.phi,
            "period": self.period,
            "chi2": self.chi2,
            "dof": self.dof,
        }


def sequential_positions(amplitudes: np.ndarray, N: int, modes: ModePair, rng: np.random.Generator,
                         grid_points: int = GRID_POINTS, prune: float = 1e-16) -> tuple[np.ndarray, float]:
    """Detect all N particles one at a time.

    ``amplitudes[i]`` multiplies the Fock state with ``N/2 - h + i`` particles
    in mode a.  Each step draws a position from the conditional density by
    inverse CDF on a periodic grid, then applies the field annihilator at that
    position and renormalizes.  Returns the positions and the worst deviation
    of the conditional density's integral from 1.
    """
    if modes.domain != "periodic":
        raise ValueError("pattern simulation needs modes on the periodic cell")
    grid = (np.arange(grid_points) + 0.5) / grid_points
    ga, gb = modes.evaluate(grid)
    wa, wb = np.abs(ga) ** 2, np.abs(gb) ** 2
    cross = np.conj(ga) * gb
    cross_re, cross_im = 2 * cross.real, -2 * cross.imag
    dens = np.empty(grid_points)
    tmp = np.empty(grid_points)
    h = (amplitudes.size - 1) // 2
    lo = N // 2 - h                                   # particles in a at c[0]
    c = np.asarray(amplitudes, dtype=complex).copy()
    R = N
    out = np.empty(N)
    worst = 0.0
    us = rng.random(N)
    for step in range(N):
        na = lo + np.arange(c.size)
        p2 = np.abs(c) ** 2
        mean_a = float(p2 @ na)
        mean_b = R - mean_a
        hop = np.sqrt((na[:-1] + 1.0) * (R - na[:-1]))
        ab = complex(np.sum(np.conj(c[1:]) * c[:-1] * hop))
        np.multiply(wa, mean_a / R, out=dens)
        dens += np.multiply(wb, mean_b / R, out=tmp)
        dens += np.multiply(cross_re, ab.real / R, out=tmp)
        dens += np.multiply(cross_im, ab.imag / R, out=tmp)
        np.maximum(dens, 0.0, out=dens)
        cdf = np.cumsum(dens, out=tmp)
        total = cdf[-1] / grid_points
        worst = max(worst, abs(total - 1.0))
        target = us[step] * cdf[-1]
        j = int(np.searchsorted(cdf, target))
        prev = cdf[j - 1] if j else 0.0
        frac = (target - prev) / dens[j] if dens[j] > 0 else 0.5
        r = (j + frac) / grid_points
        out[step] = r
        va, vb = modes.evaluate(np.array([r]))
        # new amplitudes over na' = lo-1 .. hi; a removes one from na'+1, b keeps na'
        new = np.zeros(c.size + 1, dtype=complex)
        new[:-1] += va[0] * np.sqrt(na.astype(float)) * c
        new[1:] += vb[0] * np.sqrt(np.maximum(R - na, 0).astype(float)) * c
        lo -= 1
        R -= 1
        if lo < 0:                                    # na' = -1 slot is always empty
            new = new[-lo:]
            lo = 0
        if lo + new.size - 1 > R:
            new = new[: R - lo + 1]
        norm = math.sqrt(float(np.sum(np.abs(new) ** 2)))
        if norm == 0.0:
            raise ArithmeticError("conditional state vanished")
        new /= norm
        keep = np.abs(new) ** 2 > prune
        first = int(np.argmax(keep))
        last = new.size - int(np.argmax(keep[::-1]))
        c = new[first:last]
        lo += first
    return out, worst


def fit_fringes(positions: np.ndarray, bins: int, k0: float) -> tuple[float, float, float, float, int, np.ndarray, np.ndarray]:
    """Fit ``A[1 + V cos(2 k0 x + 2 phi)]`` to the position histogram.

    A linear least-squares fit in the cosine/sine basis seeds a nonlinear fit
    with free period.  ``phi`` is reported in ``[0, pi)``.
    """
    counts, edges = np.histogram(positions, bins=bins, range=(0.0, 1.0))
    x = 0.5 * (edges[1:] + edges[:-1])
    basis = np.stack([np.ones_like(x), np.cos(2 * k0 * x), np.sin(2 * k0 * x)], axis=1)
    (A, B, C), *_ = np.linalg.lstsq(basis, counts.astype(float), rcond=None)
    if A <= 0:
        raise PatternFitError("non-positive fitted mean count")
    V0 = math.hypot(B, C) / A
    phase0 = math.atan2(-C, B)
    sigma = np.sqrt(np.maximum(counts, 1.0))

    def model(x, A, V, phase, kk):
        return A * (1 + V * np.cos(2 * kk * x + phase))

    try:
        popt, _ = optimize.curve_fit(model, x, counts, p0=[A, V0, phase0, k0], sigma=sigma,
                                     absolute_sigma=True, maxfev=5000)
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        raise PatternFitError(f"fringe fit did not converge: {exc}") from None
    A, V, phase, kk = popt
    if V < 0:
        V, phase = -V, phase + math.pi
    phi = (phase / 2) % math.pi
    chi2 = float(np.sum(((counts - model(x, *popt)) / sigma) ** 2))
    return float(V), float(phi), float(math.pi / abs(kk)), chi2, bins - 4, counts, edges


def simulate_pattern(params: SystemParams, modes: ModePair, bins: int = 100,
                     rng: np.random.Generator | None = None, grid_points: int = GRID_POINTS) -> PatternResult:
    """One experimental run: draw a state from H_n and detect every particle."""
    if not isinstance(modes, PlaneWave):
        raise ValueError("pattern simulation is defined for plane-wave modes")
    if params.N > 100_000:
        raise ValueError("pattern simulation is limited to N <= 1e5")
    rng = rng if rng is not None else np.random.default_rng()
    state = sample_state(params, rng)
    positions, worst = sequential_positions(state.amplitudes, params.N, modes, rng, grid_points)
    V, phi, period, chi2, dof, counts, edges = fit_fringes(positions, bins, modes.k0)
    return PatternResult(positions, counts, edges, V, phi, period, chi2, dof, worst)


def _pattern_task(args):
    N, n, q, bins, seed, index = args
    res = simulate_pattern(SystemParams(N, n), PlaneWave(q), bins, rng_stream(seed, _PATTERN, index))
    return res


def pattern_runs(params: SystemParams, modes: PlaneWave, runs: int, seed: int = 0, bins: int = 100,
                 workers: int | None = None) -> list[PatternResult]:
    """Independent runs, each on its own stream; parallel over processes."""
    workers = worker_count() if workers is None else workers
    tasks = [(params.N, params.n, modes.q, bins, seed, i) for i in range(runs)]
    if workers == 1:
        return [_pattern_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_pattern_task, tasks))


def phase_uniformity(phis: Sequence[float], bins: int = 10) -> tuple[float, float]:
    """Chi-square test of fitted offsets against the uniform law on ``[0, pi)``."""
    counts, _ = np.histogram(np.asarray(phis) % math.pi, bins=bins, range=(0.0, math.pi))
    res = stats.chisquare(counts)
    return float(res.statistic), float(res.pvalue)


def empirical_C2(positions: np.ndarray, bins: int = 256, x_grid: Sequence[float] | None = None,
                 N: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pair-separation density of one run divided by ``N^2``.

    Counts ordered pairs ``i != j`` with ``r_j - r_i`` (mod 1) in each bin of
    width ``1/bins``, via the circular autocorrelation of the position
    histogram.  Compare with ``1 + cos(2 k0 x)/2`` for plane waves.
    """
    positions = np.asarray(positions, dtype=float) % 1.0
    N = positions.size if N is None else N
    h, _ = np.histogram(positions, bins=bins, range=(0.0, 1.0))
    f = np.fft.rfft(h)
    pairs = np.fft.irfft(np.abs(f) ** 2, n=bins)
    pairs[0] -= h.sum()
    x = np.arange(bins) / bins
    curve = np.rint(pairs) * bins / float(N) ** 2
    if x_grid is None:
        return x, curve
    x_grid = np.asarray(x_grid, dtype=float)
    idx = x_grid * bins
    if np.any(np.abs(idx - np.rint(idx)) > 1e-9):
        raise ValueError(f"x grid must be made of multiples of the bin width 1/{bins}")
    return x_grid, curve[np.rint(idx).astype(int) % bins]


def write_pattern(path: str | Path, result: PatternResult) -> Path:
    """Histogram CSV (bin_center, counts) and a sibling fit JSON."""
    path = Path(path)
    centers = 0.5 * (result.edges[1:] + result.edges[:-1])
    with open(path, "w", newline="") as fh:
        fh.write(PATTERN_SCHEMA + "\n")
        w = csv.writer(fh)
        w.writerow(["bin_center", "counts"])
        for x, c in zip(centers, result.counts):
            w.writerow([repr(float(x)), int(c)])
    fit_path = path.with_suffix(".json")
    fit_path.write_text(json.dumps(result.fit_record(), indent=2) + "\n")
    return fit_path
