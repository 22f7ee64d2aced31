"""Kernel functions for mixed regressors and the generalised product weight.

The functional and continuous kernels use the standard normal density; the
unordered discrete kernel is Aitchison-Aitken (``1 - lam`` on a match, ``lam``
otherwise) and the ordered one is Li-Racine (``lam ** |xi - x|``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import DiscreteKind

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def phi(x):
    """Standard normal density (scalar or array)."""
    return np.exp(-0.5 * np.square(x)) / SQRT_2PI


@dataclass(frozen=True)
class BandwidthParams:
    """Bandwidths ``(delta, h, lam, b, tau)``.

    ``delta`` smooths the functional regressor, ``h`` the continuous ones,
    ``lam`` the discrete ones, ``b`` the residual density; ``tau`` localises the
    residual bandwidths (0 gives a global bandwidth).
    """

    delta: float
    h: tuple[float, ...] = ()
    lam: tuple[float, ...] = ()
    b: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        values = (self.delta, self.b, self.tau) + self.h + self.lam
        if not all(math.isfinite(v) for v in values):
            raise ValueError("bandwidths must be finite")
        if self.delta <= 0 or self.b <= 0 or any(v <= 0 for v in self.h):
            raise ValueError("delta, h and b must be positive")
        if any(v < 0 for v in self.lam):
            raise ValueError("discrete bandwidths must be non-negative")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    def check(self, p: int, kinds: Sequence[DiscreteKind]) -> None:
        if len(self.h) != p or len(self.lam) != len(kinds):
            raise ValueError(
                f"bandwidth dimensions (p={len(self.h)}, q={len(self.lam)}) do not match "
                f"the data (p={p}, q={len(kinds)})"
            )
        for s, (lam, kind) in enumerate(zip(self.lam, kinds)):
            if lam > kind.bound:
                raise ValueError(f"lambda[{s}]={lam} exceeds its bound {kind.bound}")

    def to_dict(self) -> dict:
        return {"delta": self.delta, "h": list(self.h), "lam": list(self.lam), "b": self.b, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "BandwidthParams":
        return cls(d["delta"], tuple(d.get("h", ())), tuple(d.get("lam", ())), d.get("b", 1.0), d.get("tau", 0.0))


def functional_kernel(d, delta: float):
    return phi(np.asarray(d, dtype=float) / delta) / delta


def continuous_kernel(diff, h) -> float:
    diff = np.asarray(diff, dtype=float)
    h = np.asarray(h, dtype=float)
    if diff.shape != h.shape:
        raise ValueError("diff and h differ in length")
    out = 1.0
    for dj, hj in zip(diff, h):
        out *= phi(dj / hj) / hj
    return float(out)


def aitchison_aitken(xi, x, lam: float):
    return np.where(np.asarray(xi) == np.asarray(x), 1.0 - lam, lam)


def li_racine(xi, x, lam: float):
    dist = np.abs(np.asarray(xi) - np.asarray(x))
    with np.errstate(divide="ignore"):
        return np.where(dist == 0, 1.0, np.power(lam, np.maximum(dist, 1)))


def discrete_kernel(kind: DiscreteKind, xi, x, lam: float):
    return li_racine(xi, x, lam) if kind.ordered else aitchison_aitken(xi, x, lam)


def product_weight(d: float, xc_i, xd_i, xc, xd, kinds: Sequence[DiscreteKind],
                   bw: BandwidthParams) -> float:
    """Generalised product kernel ``W`` of one training observation at a target.

    ``d`` is the semi-metric distance between the two curves; ``xc_i``/``xd_i``
    are the training observation's regressors, ``xc``/``xd`` the target's.
    """
    w = float(functional_kernel(d, bw.delta))
    w *= continuous_kernel(np.asarray(xc_i, dtype=float) - np.asarray(xc, dtype=float), bw.h)
    for s, kind in enumerate(kinds):
        w *= float(discrete_kernel(kind, xd_i[s], xd[s], bw.lam[s]))
    return w


@dataclass(frozen=True)
class KernelTerms:
    """Bandwidth-free pieces of ``log W`` between two sets of observations.

    Arrays have shape ``(n_targets, n_train)``.  ``log_weights`` combines them
    for a given bandwidth vector; only elementwise arithmetic is involved, so a
    single target row evaluates identically to the same row of a batch.
    """

    sq_dist: np.ndarray
    sq_cont: tuple[np.ndarray, ...]
    disc: tuple[np.ndarray, ...]
    kinds: tuple[DiscreteKind, ...] = field(default_factory=tuple)

    @classmethod
    def build(cls, dist, xc_target, xd_target, xc_train, xd_train, kinds) -> "KernelTerms":
        dist = np.atleast_2d(np.asarray(dist, dtype=float))
        xc_target = np.atleast_2d(np.asarray(xc_target, dtype=float))
        xc_train = np.atleast_2d(np.asarray(xc_train, dtype=float))
        xd_target = np.atleast_2d(np.asarray(xd_target))
        xd_train = np.atleast_2d(np.asarray(xd_train))
        sq_cont = tuple(
            np.square(xc_train[None, :, j] - xc_target[:, j, None]) for j in range(xc_train.shape[1])
        )
        disc = []
        for s, kind in enumerate(kinds):
            delta = np.abs(xd_train[None, :, s] - xd_target[:, s, None])
            disc.append(delta if kind.ordered else delta != 0)
        return cls(np.square(dist), sq_cont, tuple(disc), tuple(kinds))

    def log_weights(self, bw: BandwidthParams) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * (self.sq_dist / (bw.delta * bw.delta)) - (math.log(bw.delta) + LOG_SQRT_2PI)
            for sq, h in zip(self.sq_cont, bw.h):
                out = out - 0.5 * (sq / (h * h)) - (math.log(h) + LOG_SQRT_2PI)
            for mat, kind, lam in zip(self.disc, self.kinds, bw.lam):
                if kind.ordered:
                    log_lam = math.log(lam) if lam > 0 else -math.inf
                    out = out + np.where(mat == 0, 0.0, mat * log_lam)
                else:
                    log_hit = math.log1p(-lam)
                    log_miss = math.log(lam) if lam > 0 else -math.inf
                    out = out + np.where(mat, log_miss, log_hit)
        return out
