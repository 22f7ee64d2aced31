"""Functional Nadaraya-Watson estimation with mixed regressors.

Weights are evaluated in the log domain and rescaled by their maximum before
exponentiation.  The NW ratio is invariant to that rescaling, so the estimate
is unchanged while small functional bandwidths no longer underflow every
weight; :class:`DegenerateWeights` is raised only when no observation carries
weight at all (e.g. a zero discrete bandwidth with no matching category).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .dataset import Dataset
from .kernels import BandwidthParams, KernelTerms
from .semimetric import DerivSpec, SemiMetricFit, SemiMetricSpec, distances_to, fit_semimetric, pairwise


class DegenerateWeights(ArithmeticError):
    """All kernel weights are zero for some target."""

    def __init__(self, message: str = "all kernel weights vanish", index: int | None = None):
        super().__init__(message if index is None else f"{message} (observation {index})")
        self.index = index


@dataclass(frozen=True)
class FitContext:
    """Training data with its pairwise distances and precomputed kernel terms."""

    dataset: Dataset
    dist: np.ndarray
    spec: SemiMetricSpec
    fit: SemiMetricFit
    terms: KernelTerms

    def __post_init__(self):
        n = self.dataset.n
        if self.dist.shape != (n, n):
            raise ValueError("distance matrix does not match the dataset size")
        if n < 3:
            raise ValueError("leave-one-out estimation needs at least 3 observations")
        if not self.dataset.has_response:
            raise ValueError("training data needs responses")

    @classmethod
    def build(cls, ds: Dataset, spec: SemiMetricSpec | None = None,
              fit: SemiMetricFit | None = None) -> "FitContext":
        spec = spec or DerivSpec()
        fit = fit if fit is not None else fit_semimetric(spec, ds)
        dist = pairwise(spec, fit, ds)
        terms = KernelTerms.build(dist, ds.xc, ds.xd, ds.xc, ds.xd, ds.kinds)
        return cls(ds, dist, spec, fit, terms)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def y(self) -> np.ndarray:
        return self.dataset.y

    @property
    def kinds(self):
        return self.dataset.kinds

    def distances_to(self, curves) -> np.ndarray:
        """Distances from new curves to the training curves under the frozen fit."""
        return distances_to(self.fit, curves, self.dataset.curves)


def _weighted_mean(logw: np.ndarray, y: np.ndarray) -> np.ndarray:
    top = np.max(logw, axis=-1, keepdims=True)
    bad = ~np.isfinite(top[..., 0])
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(logw - top)
    num = np.sum(w * y, axis=-1)
    den = np.sum(w, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return np.where(bad, np.nan, out)


def nw_estimate(ctx: FitContext, bw: BandwidthParams, xc: Sequence[float], xd: Sequence[int],
                dists_to_train: Sequence[float], exclude: int | None = None) -> float:
    """NW estimate at one target point.

    ``exclude`` drops one training observation (leave-one-out).
    """
    bw.check(ctx.dataset.p, ctx.kinds)
    ds = ctx.dataset
    terms = KernelTerms.build(np.asarray(dists_to_train, dtype=float)[None, :],
                              np.asarray(xc, dtype=float).reshape(1, ds.p),
                              np.asarray(xd).reshape(1, ds.q), ds.xc, ds.xd, ds.kinds)
    logw = terms.log_weights(bw)
    if exclude is not None:
        logw[0, exclude] = -np.inf
    value = _weighted_mean(logw, ctx.y)[0]
    if not math.isfinite(value):
        raise DegenerateWeights(index=exclude)
    return float(value)


def loo_log_weights(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    logw = ctx.terms.log_weights(bw)
    np.fill_diagonal(logw, -np.inf)
    return logw


def nw_loo_fitted(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    """Leave-one-out fitted values ``m_{-i}(z_i)`` for every training point."""
    bw.check(ctx.dataset.p, ctx.kinds)
    fitted = _weighted_mean(loo_log_weights(ctx, bw), ctx.y)
    bad = np.flatnonzero(~np.isfinite(fitted))
    if bad.size:
        raise DegenerateWeights(index=int(bad[0]))
    return fitted


def nw_fitted(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    """In-sample fitted values (each observation keeps its own weight)."""
    bw.check(ctx.dataset.p, ctx.kinds)
    fitted = _weighted_mean(ctx.terms.log_weights(bw), ctx.y)
    bad = np.flatnonzero(~np.isfinite(fitted))
    if bad.size:
        raise DegenerateWeights(index=int(bad[0]))
    return fitted


def nw_predict(ctx: FitContext, bw: BandwidthParams, new: Dataset) -> np.ndarray:
    """Out-of-sample NW predictions for every observation of ``new``."""
    bw.check(ctx.dataset.p, ctx.kinds)
    if new.p != ctx.dataset.p or new.kinds != ctx.kinds:
        raise ValueError("new data regressors do not match the training data")
    ds = ctx.dataset
    dist = ctx.distances_to(new.curves)
    terms = KernelTerms.build(dist, new.xc, new.xd, ds.xc, ds.xd, ds.kinds)
    pred = _weighted_mean(terms.log_weights(bw), ctx.y)
    bad = np.flatnonzero(~np.isfinite(pred))
    if bad.size:
        raise DegenerateWeights(index=int(bad[0]))
    return pred


def residuals(ctx: FitContext, bw: BandwidthParams) -> np.ndarray:
    return ctx.y - nw_loo_fitted(ctx, bw)


def cv_objective(ctx: FitContext, bw: BandwidthParams) -> float:
    """Sum of squared leave-one-out prediction errors; ``inf`` if degenerate."""
    try:
        res = residuals(ctx, bw)
    except DegenerateWeights:
        return math.inf
    return float(np.sum(res * res))


@dataclass(frozen=True)
class CvBounds:
    """Search box used to place the Nelder-Mead starting points."""

    delta: tuple[float, float]
    h: tuple[tuple[float, float], ...] = ()

    @classmethod
    def default(cls, ctx: FitContext) -> "CvBounds":
        off = ctx.dist[np.triu_indices(ctx.n, 1)]
        off = off[off > 0]
        scale = float(np.median(off)) if off.size else 1.0
        delta = (0.02 * scale, 2.0 * scale)
        h = []
        for j in range(ctx.dataset.p):
            sd = float(np.std(ctx.dataset.xc[:, j])) or 1.0
            h.append((0.05 * sd, 5.0 * sd))
        return cls(delta, tuple(h))


@dataclass(frozen=True)
class CvResult:
    bandwidths: BandwidthParams
    objective: float
    n_evaluations: int


class CvFailure(RuntimeError):
    pass


def _logit(x):
    return math.log(x) - math.log1p(-x)


def _expit(u):
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))


def _cv_unpack(u, p: int, kinds) -> BandwidthParams:
    delta = math.exp(u[0])
    h = tuple(math.exp(v) for v in u[1:1 + p])
    lam = tuple(kind.bound * _expit(v) for v, kind in zip(u[1 + p:], kinds))
    return BandwidthParams(delta, h, lam)


def cv_minimize(ctx: FitContext, bounds: CvBounds | None = None, budget: int = 500,
                seed: int = 0, n_starts: int = 5) -> CvResult:
    """Minimise the CV objective with restarted Nelder-Mead.

    Search runs over ``(log delta, log h, logit(lam / bound))`` from
    ``n_starts`` scrambled-Sobol starting points inside ``bounds``; the total
    number of objective evaluations is capped by ``budget``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be positive")
    if budget < 50:
        raise ValueError(f"budget must be at least 50 evaluations, got {budget}")
    bounds = bounds or CvBounds.default(ctx)
    p, kinds = ctx.dataset.p, ctx.kinds
    if len(bounds.h) != p:
        raise ValueError("bounds must give one interval per continuous regressor")
    lo = [math.log(bounds.delta[0])] + [math.log(a) for a, _ in bounds.h] + [-3.0] * len(kinds)
    hi = [math.log(bounds.delta[1])] + [math.log(b) for _, b in bounds.h] + [3.0] * len(kinds)
    dim = len(lo)
    sobol = qmc.Sobol(dim, scramble=True, seed=seed)
    m = max(0, math.ceil(math.log2(n_starts)))
    starts = qmc.scale(sobol.random_base2(m)[:n_starts], lo, hi)

    count = 0

    def objective(u):
        nonlocal count
        count += 1
        if not np.all(np.isfinite(u)) or np.any(np.abs(u) > 700):
            return math.inf
        return cv_objective(ctx, _cv_unpack(u, p, kinds))

    best_u, best_val = None, math.inf
    per_start = budget // n_starts
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxfev": per_start, "xatol": 1e-4, "fatol": 1e-10})
        if math.isfinite(res.fun) and res.fun < best_val:
            best_u, best_val = res.x, float(res.fun)
    if best_u is None:
        raise CvFailure("every cross-validation start was degenerate")
    return CvResult(_cv_unpack(best_u, p, kinds), best_val, count)
