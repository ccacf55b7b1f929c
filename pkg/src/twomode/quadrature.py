"""Trapezoid quadrature with interval doubling.

On a periodic cell the trapezoid rule is spectrally accurate for smooth
integrands; on the real line it is used over a window outside which the
integrand has decayed to round-off.  Each doubling reuses the previous
samples and only evaluates the new midpoints.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

MAX_POINTS = 2**20


class QuadratureError(RuntimeError):
    pass


def trapezoid(
    f: Callable[[np.ndarray], np.ndarray],
    a: float = 0.0,
    b: float = 1.0,
    tol: float = 1e-10,
    n0: int = 64,
    max_points: int = MAX_POINTS,
    min_doublings: int = 1,
) -> tuple[np.ndarray, int]:
    """Integrate ``f`` over ``[a, b)`` sampled at the left cell edges.

    ``f`` maps an array of abscissae of shape ``(R,)`` to values of shape
    ``(..., R)``; vector-valued integrands converge jointly.  Convergence is
    declared when every component changes by less than
    ``tol * max(|I|, S)`` on doubling, where ``S`` is the largest integral of
    ``|f|`` among the components.  Returns the integral and the number of
    points used.
    """
    n = n0
    x = a + (b - a) * np.arange(n) / n
    total = np.asarray(f(x))
    abs_total = np.abs(total).sum(axis=-1)
    prev = total.sum(axis=-1) * (b - a) / n
    doublings = 0
    while True:
        if 2 * n > max_points:
            raise QuadratureError(
                f"trapezoid rule did not reach relative change {tol:g} within {max_points} points"
            )
        mid = a + (b - a) * (np.arange(n) + 0.5) / n
        vals = np.asarray(f(mid))
        n *= 2
        total_sum = total.sum(axis=-1) + vals.sum(axis=-1)
        abs_total = abs_total + np.abs(vals).sum(axis=-1)
        total = np.concatenate([total, vals], axis=-1)
        cur = total_sum * (b - a) / n
        scale = float(np.max(abs_total)) * (b - a) / n
        doublings += 1
        err = np.abs(cur - prev)
        bound = tol * np.maximum(np.abs(cur), scale)
        if doublings >= min_doublings and np.all(err <= bound):
            return cur, n
        prev = cur
