"""Single-particle mode pairs and symmetrized k-body products.

Three kinds of mode pair are supported:

* :class:`PlaneWave` -- ``exp(+i k0 r)`` and ``exp(-i k0 r)`` on the periodic
  unit interval with ``k0 = 2 pi q``;
* :class:`Tabulated` -- arbitrary modes sampled on a uniform periodic grid and
  evaluated off-grid by trigonometric interpolation;
* :class:`FarFieldGaussian` -- two Gaussians centred at ``z_a`` and ``z_b``,
  freely expanded for a time ``t`` under ``H0 = -d^2/dz^2`` and evaluated in the
  asymptotic far-field form.

``sigma`` for Gaussians is the standard deviation of the initial density
``|psi|^2``, i.e. ``psi(z) ~ exp(-(z - z_c)^2 / (4 sigma^2))``.

``phi_m`` is normalized as the sum over *distinct* assignments of ``m`` points
to mode a and the rest to mode b (the permutation sum divided by
``m! (k-m)!``).  With this choice the cluster decomposition of ``Phi_M`` over
a split of the points is an exact identity and ``F_m = |Phi_m|^2`` is exactly
the weight that multiplies the occupation-number products in ``<l|G_k|l>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import scipy.signal

MAX_K = 6
TABULATED_HEADER = "# twomode-tabulated v1: x re_a im_a re_b im_b"


class ModePair(Protocol):
    domain: str  # "periodic" (unit cell) or "line"

    def evaluate(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def window(self) -> tuple[float, float]: ...


@dataclass(frozen=True)
class PlaneWave:
    q: int = 1
    domain: str = field(default="periodic", init=False)

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError(f"harmonic q must be a positive integer, got {self.q}")

    @property
    def k0(self) -> float:
        return 2 * np.pi * self.q

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        phase = self.k0 * z
        return np.exp(1j * phase), np.exp(-1j * phase)

    def window(self):
        return 0.0, 1.0


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Modes sampled at ``grid = arange(G)/G`` on the periodic unit interval."""

    grid: np.ndarray
    values_a: np.ndarray
    values_b: np.ndarray
    tol: float = 1e-8
    domain: str = field(default="periodic", init=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        va = np.asarray(self.values_a, dtype=complex)
        vb = np.asarray(self.values_b, dtype=complex)
        G = grid.size
        if va.shape != (G,) or vb.shape != (G,):
            raise ValueError("grid and mode values must have matching length")
        if not np.allclose(grid, np.arange(G) / G, atol=1e-12):
            raise ValueError("tabulated modes need the uniform grid arange(G)/G on [0, 1)")
        overlaps = (np.vdot(va, va).real / G, np.vdot(vb, vb).real / G, abs(np.vdot(va, vb)) / G)
        if abs(overlaps[0] - 1) > self.tol or abs(overlaps[1] - 1) > self.tol or overlaps[2] > self.tol:
            raise ValueError(f"modes are not orthonormal: <a|a>, <b|b>, |<a|b>| = {overlaps}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values_a", va)
        object.__setattr__(self, "values_b", vb)
        freqs = np.fft.fftfreq(G, d=1.0 / G)
        object.__setattr__(self, "_freqs", freqs)
        object.__setattr__(self, "_coef_a", np.fft.fft(va) / G)
        object.__setattr__(self, "_coef_b", np.fft.fft(vb) / G)

    @classmethod
    def from_functions(cls, fa, fb, size: int = 256, orthonormalize: bool = True) -> "Tabulated":
        """Sample two callables, Gram-Schmidt them and normalize on the grid."""
        x = np.arange(size) / size
        va = np.asarray(fa(x), dtype=complex)
        vb = np.asarray(fb(x), dtype=complex)
        if orthonormalize:
            va = va / np.sqrt(np.vdot(va, va).real / size)
            vb = vb - va * (np.vdot(va, vb) / size)
            vb = vb / np.sqrt(np.vdot(vb, vb).real / size)
        return cls(x, va, vb)

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        on_grid = np.allclose(flat * self.grid.size, np.round(flat * self.grid.size), atol=1e-9, rtol=0)
        if on_grid:
            idx = np.round(flat * self.grid.size).astype(int) % self.grid.size
            return self.values_a[idx].reshape(z.shape), self.values_b[idx].reshape(z.shape)
        out_a = np.empty(flat.size, dtype=complex)
        out_b = np.empty(flat.size, dtype=complex)
        step = max(1, 2**22 // self.grid.size)
        for i in range(0, flat.size, step):
            basis = np.exp(2j * np.pi * np.outer(flat[i:i + step], self._freqs))
            out_a[i:i + step] = basis @ self._coef_a
            out_b[i:i + step] = basis @ self._coef_b
        return out_a.reshape(z.shape), out_b.reshape(z.shape)

    def window(self):
        return 0.0, 1.0

    def save(self, path: str | Path) -> None:
        data = np.column_stack([
            self.grid, self.values_a.real, self.values_a.imag, self.values_b.real, self.values_b.imag,
        ])
        np.savetxt(path, data, header=TABULATED_HEADER[2:], fmt="%.17g")


def load_tabulated(path: str | Path) -> Tabulated:
    """Read the five-column text format written by :meth:`Tabulated.save`.

    Columns are ``x, Re psi_a, Im psi_a, Re psi_b, Im psi_b``; ``x`` must be the
    uniform grid ``arange(G)/G``.  Lines starting with ``#`` are ignored.
    """
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 5:
        raise ValueError(f"{path}: expected 5 columns (x re_a im_a re_b im_b), got {data.shape[1]}")
    return Tabulated(data[:, 0], data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])


# -- Gaussians and free expansion ----------------------------------------------

def gaussian_initial(z, center: float, sigma: float):
    z = np.asarray(z, dtype=float)
    return (2 * np.pi * sigma**2) ** -0.25 * np.exp(-((z - center) ** 2) / (4 * sigma**2)) + 0j


def gaussian_fourier(k, center: float, sigma: float):
    """``int dz exp(-i k z) psi(z)`` of :func:`gaussian_initial`."""
    k = np.asarray(k, dtype=float)
    return (8 * np.pi * sigma**2) ** 0.25 * np.exp(-1j * k * center - sigma**2 * k**2)


def gaussian_exact(z, center: float, sigma: float, t: float):
    """Exact free evolution ``exp(-i t H0) psi`` with ``H0 = -d^2/dz^2``."""
    z = np.asarray(z, dtype=float)
    s = sigma**2 + 1j * t
    return (2 * np.pi * sigma**2) ** -0.25 * np.sqrt(sigma**2 / s) * np.exp(-((z - center) ** 2) / (4 * s))


def far_field_form(z, psi_tilde, t: float):
    """Asymptotic ``(4 pi i t)^(-1/2) exp(i z^2/4t) psi~(z/2t)``."""
    z = np.asarray(z, dtype=float)
    return (4j * np.pi * t) ** -0.5 * np.exp(1j * z**2 / (4 * t)) * psi_tilde(z / (2 * t))


@dataclass(frozen=True)
class FarFieldGaussian:
    z_a: float
    z_b: float
    sigma: float
    t: float
    exact: bool = False
    domain: str = field(default="line", init=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.t <= 0:
            raise ValueError("expansion time t must be positive")

    @property
    def separation(self) -> float:
        return self.z_b - self.z_a

    @property
    def effective_wavenumber(self) -> float:
        """``k0(t) = z0 / 4t`` of the equivalent counter-propagating plane waves."""
        return self.separation / (4 * self.t)

    def initial(self, z):
        return gaussian_initial(z, self.z_a, self.sigma), gaussian_initial(z, self.z_b, self.sigma)

    def evaluate(self, z):
        if self.exact:
            return (gaussian_exact(z, self.z_a, self.sigma, self.t),
                    gaussian_exact(z, self.z_b, self.sigma, self.t))
        return far_field(self, z)

    def window(self):
        width = np.sqrt(self.sigma**2 + (self.t / self.sigma) ** 2)
        lo, hi = min(self.z_a, self.z_b), max(self.z_a, self.z_b)
        return lo - 14 * width, hi + 14 * width

    def initial_window(self):
        lo, hi = min(self.z_a, self.z_b), max(self.z_a, self.z_b)
        return lo - 14 * self.sigma, hi + 14 * self.sigma


def far_field(modes: FarFieldGaussian, z):
    """Far-field mode functions ``psi_{a,b}(z, t)`` of the expanding Gaussians."""
    if modes.t <= 0:
        raise ValueError("far-field form needs t > 0")
    pa = far_field_form(z, lambda k: gaussian_fourier(k, modes.z_a, modes.sigma), modes.t)
    pb = far_field_form(z, lambda k: gaussian_fourier(k, modes.z_b, modes.sigma), modes.t)
    return pa, pb


def split_step_evolve(values: np.ndarray, dz: float, t: float) -> np.ndarray:
    """Free evolution on a periodic grid by one exact Fourier-space step."""
    k = 2 * np.pi * np.fft.fftfreq(values.size, d=dz)
    return np.fft.ifft(np.fft.fft(values) * np.exp(-1j * k**2 * t))


# -- symmetrized products -------------------------------------------------------

def _check_order(k: int, m: int | None = None):
    if k > MAX_K:
        raise ValueError(f"k={k} exceeds the cap k <= {MAX_K}")
    if m is not None and not 0 <= m <= k:
        raise ValueError(f"m={m} outside 0..{k}")


def phis_from_values(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """All ``Phi_m`` for m = 0..k from mode values of shape ``(k, ...)``.

    Expands ``prod_i (psi_b(r_i) + u psi_a(r_i))``; the coefficient of ``u^m``
    is the assignment sum defining ``Phi_m``.  Returns shape ``(k+1, ...)``.
    """
    va = np.asarray(va)
    vb = np.asarray(vb)
    k = va.shape[0]
    out = np.zeros((k + 1,) + va.shape[1:], dtype=complex)
    out[0] = 1.0
    for i in range(k):
        shifted = np.zeros_like(out)
        shifted[1:] = out[:-1] * va[i]
        out = out * vb[i] + shifted
    return out


def all_phi(modes: ModePair, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    _check_order(points.shape[0])
    va, vb = modes.evaluate(points)
    return phis_from_values(va, vb)


def phi_m(modes: ModePair, m: int, points) -> complex | np.ndarray:
    """Symmetrized product with ``m`` particles in mode a at the given points."""
    points = np.asarray(points, dtype=float)
    _check_order(points.shape[0], m)
    return all_phi(modes, points)[m]


def f_m(modes: ModePair, m: int, points):
    return np.abs(phi_m(modes, m, points)) ** 2


def cluster_decompose_check(modes: ModePair, M: int, points) -> float:
    """Residual of ``Phi_M(2k) = sum_m Phi_{M-m}(first k) Phi_m(last k)``."""
    points = np.asarray(points, dtype=float)
    K = points.shape[0]
    if K % 2:
        raise ValueError("cluster decomposition needs an even number of points")
    k = K // 2
    if not 0 <= M <= K:
        raise ValueError(f"M={M} outside 0..{K}")
    va, vb = modes.evaluate(points)
    full = phis_from_values(va, vb)[M]
    left = phis_from_values(va[:k], vb[:k])
    right = phis_from_values(va[k:], vb[k:])
    split = sum(left[M - m] * right[m] for m in range(max(0, M - k), min(M, k) + 1))
    return float(np.max(np.abs(full - split)))


# -- convolution profile ---------------------------------------------------------

@dataclass(frozen=True)
class ConvolutionProfile:
    z: np.ndarray
    F_ab: np.ndarray
    phi_ab: np.ndarray
    z0: float
    curvature: float

    @property
    def separation_ratio(self) -> float:
        """``z0 / (2 pi / |F''|)``; the modes count as separated when this is >> 1."""
        return abs(self.z0) * abs(self.curvature) / (2 * np.pi)

    def separated(self, threshold: float = 10.0) -> bool:
        return self.separation_ratio >= threshold

    @property
    def suppression_exponent(self) -> float:
        """``(z0 |F''|)^2`` as used in the exponential suppression estimate."""
        return (self.z0 * self.curvature) ** 2


class ProfileError(ValueError):
    pass


def convolution_profile(modes, points: int = 8192, fit_half_width: int = 4) -> ConvolutionProfile:
    """``log`` magnitude and phase of ``int psi_a*(z') psi_b(z'+z) dz'``.

    For Gaussian pairs the initial (unexpanded) modes are used.
    """
    if isinstance(modes, FarFieldGaussian):
        lo, hi = modes.initial_window()
        evaluate = modes.initial
    else:
        lo, hi = modes.window()
        evaluate = modes.evaluate
    z = np.linspace(lo, hi, points, endpoint=False)
    dz = z[1] - z[0]
    va, vb = evaluate(z)
    corr = scipy.signal.correlate(vb, va, mode="full", method="fft") * dz
    lags = scipy.signal.correlation_lags(vb.size, va.size, mode="full") * dz
    mag = np.abs(corr)
    peak = int(np.argmax(mag))
    if mag[peak] == 0 or peak < fit_half_width or peak >= mag.size - fit_half_width:
        raise ProfileError("mode convolution has no interior maximum")
    with np.errstate(divide="ignore"):
        F = np.log(mag)
    sl = slice(peak - fit_half_width, peak + fit_half_width + 1)
    coef = np.polyfit(lags[sl] - lags[peak], F[sl], 2)
    curvature = 2 * coef[0]
    if not curvature < 0:
        raise ProfileError("mode convolution has no interior maximum")
    z0 = lags[peak] - coef[1] / (2 * coef[0])
    return ConvolutionProfile(lags, F, np.unwrap(np.angle(corr)), float(z0), float(curvature))


def parse_modes(desc: str) -> ModePair:
    """Build a mode pair from ``name:key=val,...``.

    ``planewave:q=1``, ``gaussian:d=10,sigma=1,t=50[,exact=1]`` (centres at
    ``-d/2`` and ``+d/2``), ``tabulated:path=modes.txt``.
    """
    name, _, rest = desc.partition(":")
    kv: dict[str, str] = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"malformed descriptor item {item!r} in {desc!r}")
        kv[key.strip()] = val.strip()
    name = name.strip().lower()
    try:
        if name in ("planewave", "pw"):
            modes = PlaneWave(int(kv.pop("q", "1")))
        elif name == "gaussian":
            d = float(kv.pop("d"))
            sigma = float(kv.pop("sigma", "1"))
            t = float(kv.pop("t"))
            exact = kv.pop("exact", "0") not in ("0", "false", "no")
            modes = FarFieldGaussian(-d / 2, d / 2, sigma, t, exact=exact)
        elif name == "tabulated":
            modes = load_tabulated(kv.pop("path"))
        else:
            raise ValueError(f"unknown mode family {name!r}")
    except KeyError as exc:
        raise ValueError(f"missing key {exc} in mode descriptor {desc!r}") from None
    if kv:
        raise ValueError(f"unknown keys {sorted(kv)} in mode descriptor {desc!r}")
    return modes
