"""Static figures for CLI runs (matplotlib, Agg backend, written to files)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scans(scans: Sequence, path) -> Path:
    """Relative fluctuation against N on log-log axes, one line per alpha."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for scan in scans:
        N = np.array([p.N for p in scan.points], dtype=float)
        rel = np.array([p.relfluct for p in scan.points])
        line, = ax.loglog(N, rel, "o", label=f"alpha={scan.alpha:g}, slope {scan.fit.slope:.3f}")
        ax.loglog(N, np.exp(scan.fit.intercept) * N**scan.fit.slope, "-", color=line.get_color(), lw=1)
    ax.set_xlabel("N")
    ax.set_ylabel("relative fluctuation")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_n_sweep(ns, excess, fit, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ns = np.asarray(ns, dtype=float)
    ax.loglog(ns, excess, "o")
    ax.loglog(ns, np.exp(fit.intercept) * ns**fit.slope, "-", lw=1, label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("variance excess over n = 1")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_pattern(result, k0: float, path, c2: tuple[np.ndarray, np.ndarray] | None = None) -> Path:
    """Position histogram with the fitted fringes, plus the pair correlation if given."""
    ncols = 2 if c2 is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5 * ncols, 4), squeeze=False)
    ax = axes[0, 0]
    centers = 0.5 * (result.edges[1:] + result.edges[:-1])
    width = result.edges[1] - result.edges[0]
    ax.bar(centers, result.counts, width=width, color="0.75")
    xs = np.linspace(0, 1, 800)
    mean = result.counts.mean()
    kk = np.pi / result.period
    ax.plot(xs, mean * (1 + result.V * np.cos(2 * kk * xs + 2 * result.phi)), "r-", lw=1)
    ax.set_xlabel("position")
    ax.set_ylabel("counts")
    ax.set_title(f"V = {result.V:.3f}, phi = {result.phi:.3f}")
    if c2 is not None:
        ax = axes[0, 1]
        x, curve = c2
        ax.plot(x, curve, ".", ms=3, label="single run")
        ax.plot(xs, 1 + 0.5 * np.cos(2 * k0 * xs), "k-", lw=1, label="1 + cos(2 k0 x)/2")
        ax.set_xlabel("x")
        ax.set_ylabel("C2(x) / N^2")
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_i_table(table: np.ndarray, path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3.5))
    mag = np.log10(np.abs(table) + 1e-300)
    im = ax.imshow(np.clip(mag, -17, None), cmap="viridis")
    ax.set_xlabel("m'")
    ax.set_ylabel("m")
    fig.colorbar(im, ax=ax, label="log10 |I[m, m']|")
    return _save(fig, path)
