"""Kernel-form error density built from regression residuals.

Residual ``j`` carries bandwidth ``b * (1 + tau * |e_j|)``; ``tau = 0`` gives
the global-bandwidth estimator.  The leave-one-out versions feed the kernel
likelihood, the full-sample versions are used for density grids and
prediction intervals.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from .kernels import LOG_SQRT_2PI, phi


def residual_bandwidths(residuals, b: float, tau: float = 0.0) -> np.ndarray:
    return b * (1.0 + tau * np.abs(np.asarray(residuals, dtype=float)))


def localized_loo_kde(residuals: Sequence[float], i: int, b: float, tau: float) -> float:
    """Density of the residuals other than ``i``, evaluated at residual ``i``."""
    e = np.asarray(residuals, dtype=float)
    n = e.size
    if n < 3:
        raise ValueError("leave-one-out density needs at least 3 residuals")
    if not 0 <= i < n:
        raise IndexError(i)
    bj = residual_bandwidths(e, b, tau)
    keep = np.arange(n) != i
    terms = phi((e[i] - e[keep]) / bj[keep]) / bj[keep]
    return float(np.sum(terms) / (n - 1))


def loo_kde(residuals: Sequence[float], i: int, b: float) -> float:
    return localized_loo_kde(residuals, i, b, 0.0)


def loo_log_density(residuals, b: float, tau: float = 0.0) -> np.ndarray:
    """``log f_{-i}(e_i)`` for every residual, computed stably in log space."""
    e = np.asarray(residuals, dtype=float)
    n = e.size
    bj = residual_bandwidths(e, b, tau)
    z = (e[:, None] - e[None, :]) / bj[None, :]
    logk = -0.5 * z * z - np.log(bj)[None, :]
    np.fill_diagonal(logk, -np.inf)
    return logsumexp(logk, axis=1) - LOG_SQRT_2PI - math.log(n - 1)


def error_density_grid(residuals, b: float, tau: float, grid) -> np.ndarray:
    """Full-sample kernel density ``(1/n) sum_j phi((u - e_j)/b_j)/b_j`` on ``grid``."""
    u = np.asarray(grid, dtype=float)
    if u.size == 0:
        raise ValueError("empty evaluation grid")
    e = np.asarray(residuals, dtype=float)
    bj = residual_bandwidths(e, b, tau)
    return np.mean(phi((u[:, None] - e[None, :]) / bj[None, :]) / bj[None, :], axis=1)


def error_cdf(residuals, b: float, tau: float, grid) -> np.ndarray:
    u = np.asarray(grid, dtype=float)
    e = np.asarray(residuals, dtype=float)
    bj = residual_bandwidths(e, b, tau)
    return np.mean(ndtr((u[:, None] - e[None, :]) / bj[None, :]), axis=1)


class RangeTooNarrow(ValueError):
    pass


def error_cdf_inverse(residuals, b: float, tau: float, probs: Sequence[float],
                      lo: float = -10.0, hi: float = 10.0, n_grid: int = 1001) -> np.ndarray:
    """Quantiles by grid snapping.

    The CDF is evaluated on ``n_grid`` equispaced points of ``[lo, hi]`` and, for
    each probability, the grid point whose CDF value is closest is returned
    (ties go to the lower point).
    """
    if not lo < hi:
        raise ValueError("lo must be below hi")
    if n_grid < 101:
        raise ValueError("n_grid must be at least 101")
    probs = np.asarray(probs, dtype=float)
    if np.any((probs <= 0) | (probs >= 1)):
        raise ValueError("probabilities must lie in (0, 1)")
    grid = np.linspace(lo, hi, n_grid)
    cdf = error_cdf(residuals, b, tau, grid)
    if probs.min() < cdf[0] or probs.max() > cdf[-1]:
        raise RangeTooNarrow(
            f"grid [{lo}, {hi}] covers CDF values [{cdf[0]:.4g}, {cdf[-1]:.4g}] only"
        )
    idx = np.argmin(np.abs(cdf[None, :] - probs[:, None]), axis=1)
    return grid[idx]


def save_grid_csv(path, grid, values, header: str = "u,value") -> None:
    np.savetxt(path, np.column_stack([grid, values]), delimiter=",", header=header,
               comments="", fmt="%.17g")
