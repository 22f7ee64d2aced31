"""Priors, kernel likelihood and the bandwidth posterior.

The sampler works in an unconstrained space:

=============  ==========================
parameter      coordinate
=============  ==========================
delta          ``log delta**2``
h_j            ``log h_j**2``
lam_s          ``logit(lam_s / bound_s)``
b              ``log b**2``
tau            ``logit(tau)`` (localised only)
=============  ==========================

The log posterior in that space adds the log Jacobian of the map to the
log prior of the squared bandwidths, lambdas and tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .dataset import DiscreteKind
from .errdensity import loo_log_density
from .kernels import BandwidthParams
from .regression import DegenerateWeights, FitContext, residuals

SATURATION = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """Independent prior on each squared bandwidth plus uniform priors on lambda and tau.

    ``kind`` is ``"ig"`` (inverse gamma with shape ``alpha`` and scale ``beta``)
    or ``"cauchy"`` (half-Cauchy with ``scale``).
    """

    kind: str = "ig"
    alpha: float = 1.0
    beta: float = 0.05
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ig", "cauchy"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if min(self.alpha, self.beta, self.scale) <= 0:
            raise ValueError("prior hyperparameters must be positive")

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse ``ig:ALPHA:BETA``, ``cauchy`` or ``cauchy:SCALE``."""
        parts = text.strip().lower().split(":")
        try:
            if parts[0] == "ig" and len(parts) == 3:
                return cls("ig", float(parts[1]), float(parts[2]))
            if parts[0] == "cauchy" and len(parts) <= 2:
                return cls("cauchy", scale=float(parts[1]) if len(parts) == 2 else 1.0)
        except ValueError:
            pass
        raise ValueError(f"cannot parse prior {text!r}; use ig:ALPHA:BETA or cauchy[:SCALE]")

    def label(self) -> str:
        if self.kind == "ig":
            return f"IG({self.alpha:g}, {self.beta:g})"
        return "Cauchy" if self.scale == 1.0 else f"Cauchy({self.scale:g})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta, "scale": self.scale}

    def log_density(self, x: float) -> float:
        """Log prior density of one squared bandwidth ``x > 0``."""
        if self.kind == "ig":
            a, b = self.alpha, self.beta
            return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x
        s = self.scale
        return math.log(2.0 / (math.pi * s)) - math.log1p((x / s) ** 2)


def log_prior(params: BandwidthParams, spec: PriorSpec, kinds: Sequence[DiscreteKind],
              localized: bool = False) -> float:
    out = spec.log_density(params.delta ** 2)
    out += sum(spec.log_density(h * h) for h in params.h)
    out += spec.log_density(params.b ** 2)
    for lam, kind in zip(params.lam, kinds):
        out += -math.log(kind.bound) if 0.0 <= lam <= kind.bound else -math.inf
    # tau ~ U[0, 1] contributes log 1 = 0
    return out


def _log_expit(u: float) -> float:
    return -math.log1p(math.exp(-u)) if u >= 0 else u - math.log1p(math.exp(u))


def _expit(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))


@dataclass(frozen=True)
class ParamLayout:
    """Maps between the unconstrained vector ``u`` and :class:`BandwidthParams`."""

    p: int
    kinds: tuple[DiscreteKind, ...]
    localized: bool = False

    @property
    def dim(self) -> int:
        return 2 + self.p + len(self.kinds) + int(self.localized)

    @property
    def names(self) -> list[str]:
        names = ["delta"] + [f"h{j + 1}" for j in range(self.p)]
        names += [f"lambda{s + 1}" for s in range(len(self.kinds))] + ["b"]
        return names + (["tau"] if self.localized else [])

    def to_params(self, u) -> BandwidthParams:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("transformed parameters must be finite")
        p, q = self.p, len(self.kinds)
        delta = math.exp(0.5 * u[0])
        h = tuple(math.exp(0.5 * v) for v in u[1:1 + p])
        lam = []
        for v, kind in zip(u[1 + p:1 + p + q], self.kinds):
            lam.append(min(max(kind.bound * _expit(v), SATURATION), kind.bound - SATURATION))
        b = math.exp(0.5 * u[1 + p + q])
        tau = 0.0
        if self.localized:
            tau = min(max(_expit(u[2 + p + q]), SATURATION), 1.0 - SATURATION)
        return BandwidthParams(delta, h, tuple(lam), b, tau)

    def to_natural(self, draws) -> np.ndarray:
        """Vectorised back-transform of an ``(n, dim)`` array of draws."""
        u = np.atleast_2d(np.asarray(draws, dtype=float))
        p, q = self.p, len(self.kinds)
        out = np.empty_like(u)
        out[:, :1 + p] = np.exp(0.5 * u[:, :1 + p])
        for s, kind in enumerate(self.kinds):
            out[:, 1 + p + s] = kind.bound / (1.0 + np.exp(-u[:, 1 + p + s]))
        out[:, 1 + p + q] = np.exp(0.5 * u[:, 1 + p + q])
        if self.localized:
            out[:, -1] = 1.0 / (1.0 + np.exp(-u[:, -1]))
        return out

    def from_params(self, params: BandwidthParams) -> np.ndarray:
        u = [math.log(params.delta ** 2)] + [math.log(h * h) for h in params.h]
        for lam, kind in zip(params.lam, self.kinds):
            x = lam / kind.bound
            u.append(math.log(x) - math.log1p(-x))
        u.append(math.log(params.b ** 2))
        if self.localized:
            u.append(math.log(params.tau) - math.log1p(-params.tau))
        return np.array(u)

    def log_jacobian(self, u) -> float:
        """``log |d(delta^2, h^2, lam, b^2, tau) / du|``."""
        p, q = self.p, len(self.kinds)
        out = float(u[0]) + float(np.sum(u[1:1 + p])) + float(u[1 + p + q])
        for v, kind in zip(u[1 + p:1 + p + q], self.kinds):
            out += math.log(kind.bound) + _log_expit(v) + _log_expit(-v)
        if self.localized:
            v = u[2 + p + q]
            out += _log_expit(v) + _log_expit(-v)
        return out


def log_kernel_likelihood(ctx: FitContext, params: BandwidthParams, localized: bool = False) -> float:
    """``sum_i log f_{-i}(y_i - m_{-i}(z_i))``; ``-inf`` if the NW weights degenerate."""
    try:
        res = residuals(ctx, params)
    except DegenerateWeights:
        return -math.inf
    tau = params.tau if localized else 0.0
    return float(np.sum(loo_log_density(res, params.b, tau)))


class Posterior:
    """Log posterior of the bandwidths in the unconstrained coordinates."""

    def __init__(self, ctx: FitContext, prior: PriorSpec | None = None, localized: bool = False):
        self.ctx = ctx
        self.prior = prior or PriorSpec()
        self.localized = localized
        self.layout = ParamLayout(ctx.dataset.p, tuple(ctx.kinds), localized)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def log_prior(self, params: BandwidthParams) -> float:
        return log_prior(params, self.prior, self.layout.kinds, self.localized)

    def log_likelihood(self, params: BandwidthParams) -> float:
        return log_kernel_likelihood(self.ctx, params, self.localized)

    def __call__(self, u) -> float:
        params = self.layout.to_params(u)
        ll = self.log_likelihood(params)
        if not math.isfinite(ll):
            return -math.inf
        return ll + self.log_prior(params) + self.layout.log_jacobian(np.asarray(u, dtype=float))

    log_posterior = __call__

    def default_init(self) -> np.ndarray:
        kinds = self.layout.kinds
        params = BandwidthParams(
            0.5, (0.5,) * self.layout.p, tuple(k.bound / 2 for k in kinds), 0.5,
            0.5 if self.localized else 0.0,
        )
        return self.layout.from_params(params)

    def find_init(self, rng: np.random.Generator, retries: int = 50,
                  init=None) -> np.ndarray:
        """Starting point with finite log posterior; jitters the default on failure."""
        u0 = self.default_init() if init is None else np.asarray(init, dtype=float)
        if math.isfinite(self(u0)):
            return u0
        for _ in range(retries):
            u = u0 + rng.normal(scale=1.0, size=u0.size)
            if math.isfinite(self(u)):
                return u
        raise RuntimeError("could not find a starting point with finite log posterior")


def log_posterior(ctx: FitContext, u, prior: PriorSpec, localized: bool = False) -> float:
    return Posterior(ctx, prior, localized)(u)
