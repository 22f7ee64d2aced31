"""End-to-end bandwidth fitting: sample the posterior, summarise it, predict.

A :class:`BayesFit` bundles the training context, the chain and the point
estimate of the bandwidths (posterior mean on the natural scale), and knows
how to produce point forecasts, error densities, prediction intervals and the
log marginal likelihood.  It serialises to a JSON model file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, DiscreteKind
from .errdensity import error_cdf_inverse, error_density_grid
from .kernels import BandwidthParams
from .posterior import Posterior, PriorSpec
from .regression import FitContext, nw_fitted, nw_predict, residuals
from .sampler import Chain, Evidence, McmcConfig, ParamSummary, marginal_likelihood, sample_posterior, summarize
from .semimetric import DerivSpec, SemiMetricSpec, spec_from_dict

MODEL_FORMAT = 1


@dataclass
class BayesFit:
    ctx: FitContext
    prior: PriorSpec
    localized: bool
    bandwidths: BandwidthParams
    residuals: np.ndarray
    chain: Chain | None = None
    summary: list[ParamSummary] | None = None

    @property
    def posterior(self) -> Posterior:
        return Posterior(self.ctx, self.prior, self.localized)

    @property
    def tau(self) -> float:
        return self.bandwidths.tau if self.localized else 0.0

    def fitted(self) -> np.ndarray:
        return nw_fitted(self.ctx, self.bandwidths)

    def predict(self, new: Dataset) -> np.ndarray:
        return nw_predict(self.ctx, self.bandwidths, new)

    def density(self, grid) -> np.ndarray:
        return error_density_grid(self.residuals, self.bandwidths.b, self.tau, grid)

    def error_quantiles(self, probs, lo: float = -10.0, hi: float = 10.0, n_grid: int = 1001) -> np.ndarray:
        return error_cdf_inverse(self.residuals, self.bandwidths.b, self.tau, probs, lo, hi, n_grid)

    def intervals(self, point: np.ndarray, level: float = 0.95, lo: float = -10.0, hi: float = 10.0,
                  n_grid: int = 1001) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise prediction intervals: forecast plus error-distribution quantiles."""
        tail = (1.0 - level) / 2
        q_lo, q_hi = self.error_quantiles([tail, 1.0 - tail], lo, hi, n_grid)
        return point + q_lo, point + q_hi

    def log_marginal_likelihood(self, n_proposal_draws: int = 5000, seed: int = 0) -> Evidence:
        if self.chain is None:
            raise ValueError("marginal likelihood needs the posterior chain")
        return marginal_likelihood(self.posterior, self.chain, n_proposal_draws, seed)

    def to_dict(self) -> dict:
        ds = self.ctx.dataset
        out = {
            "format": MODEL_FORMAT,
            "semimetric": self.ctx.spec.to_dict(),
            "prior": self.prior.to_dict(),
            "localized": self.localized,
            "bandwidths": self.bandwidths.to_dict(),
            "residuals": self.residuals.tolist(),
            "train": {
                "grid": ds.grid.tolist(),
                "curves": ds.curves.tolist(),
                "xc": ds.xc.tolist(),
                "xd": ds.xd.tolist(),
                "y": ds.y.tolist(),
                "kinds": [k.to_dict() for k in ds.kinds],
                "continuous_names": list(ds.continuous_names),
                "discrete_names": list(ds.discrete_names),
            },
        }
        if self.summary is not None:
            out["summary"] = [vars(s) for s in self.summary]
        if self.chain is not None:
            out["acceptance_rate"] = self.chain.acceptance_rate
            out["step_size"] = self.chain.step_size
        return out

    def save(self, path, extra: dict | None = None) -> None:
        data = self.to_dict()
        if extra:
            data.update(extra)
        Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "BayesFit":
        if data.get("format") != MODEL_FORMAT:
            raise ValueError("unsupported model file format")
        t = data["train"]
        ds = Dataset(
            np.array(t["grid"]), np.array(t["curves"]),
            np.array(t["xc"], dtype=float).reshape(len(t["y"]), -1),
            np.array(t["xd"], dtype=np.int64).reshape(len(t["y"]), -1),
            np.array(t["y"]), tuple(DiscreteKind.from_dict(k) for k in t["kinds"]),
            tuple(t["continuous_names"]), tuple(t["discrete_names"]),
        )
        ctx = FitContext.build(ds, spec_from_dict(data["semimetric"]))
        p = data["prior"]
        return cls(
            ctx,
            PriorSpec(p["kind"], p["alpha"], p["beta"], p["scale"]),
            bool(data["localized"]),
            BandwidthParams.from_dict(data["bandwidths"]),
            np.array(data["residuals"]),
        )

    @classmethod
    def load(cls, path) -> "BayesFit":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def point_estimate(chain: Chain, posterior: Posterior) -> BandwidthParams:
    """Posterior mean of the natural-scale bandwidths."""
    natural = chain.natural if chain.natural is not None else posterior.layout.to_natural(chain.draws)
    mean = natural.mean(axis=0)
    p, q = posterior.layout.p, len(posterior.layout.kinds)
    return BandwidthParams(
        float(mean[0]),
        tuple(mean[1:1 + p]),
        tuple(mean[1 + p:1 + p + q]),
        float(mean[1 + p + q]),
        float(mean[-1]) if posterior.localized else 0.0,
    )


def fit_bayes(ds: Dataset | FitContext, prior: PriorSpec | None = None, localized: bool = False,
              cfg: McmcConfig | None = None, spec: SemiMetricSpec | None = None) -> BayesFit:
    ctx = ds if isinstance(ds, FitContext) else FitContext.build(ds, spec or DerivSpec())
    prior = prior or PriorSpec()
    cfg = cfg or McmcConfig()
    post = Posterior(ctx, prior, localized)
    chain = sample_posterior(post, cfg)
    bw = point_estimate(chain, post)
    return BayesFit(ctx, prior, localized, bw, residuals(ctx, bw), chain, summarize(chain))
