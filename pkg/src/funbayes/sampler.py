"""Adaptive random-walk Metropolis, chain diagnostics and marginal likelihood.

One block holds every coordinate.  The proposal is ``u + sigma * L xi`` with
``xi`` standard normal.  During burn-in ``log sigma`` follows a Robbins-Monro
recursion towards the target acceptance rate and ``L`` tracks the shape of the
burn-in draws; both are frozen afterwards so the recorded chain is a
time-homogeneous Metropolis chain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

LogTarget = Callable[[np.ndarray], float]

BATCH_SIZE = 100


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 1000
    n_record: int = 10000
    seed: int = 0
    target_accept: float = 0.234
    adapt_decay: float = 0.6
    init_step: float | None = None
    adapt: bool = True
    adapt_covariance: bool = True

    def __post_init__(self):
        if self.burn_in < 100:
            raise ValueError("burn_in must be at least 100")
        if self.n_record < 1000:
            raise ValueError("n_record must be at least 1000")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class Chain:
    draws: np.ndarray
    accepted: np.ndarray
    log_post: np.ndarray
    step_size: float
    names: list[str] = field(default_factory=list)
    natural: np.ndarray | None = None
    proposal_factor: np.ndarray | None = None

    def __post_init__(self):
        n, d = self.draws.shape
        if self.accepted.shape != (n,) or self.log_post.shape != (n,):
            raise ValueError("chain traces have inconsistent lengths")
        if not self.names:
            self.names = [f"u{k}" for k in range(d)]
        if self.proposal_factor is None:
            self.proposal_factor = np.eye(d)

    @property
    def n_record(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    @property
    def final_step_size(self) -> float:
        return self.step_size


def run_chain(log_target: LogTarget, init, cfg: McmcConfig, names: Sequence[str] | None = None) -> Chain:
    """Run the adaptive block random-walk Metropolis sampler.

    ``log_target`` must be finite at ``init``.  Iterations are numbered from 1;
    the first ``cfg.burn_in`` adapt the proposal and are discarded.  With
    ``cfg.adapt_covariance`` the proposal is ``u + sigma * L xi`` where ``L`` is
    the Cholesky factor of the covariance of the burn-in draws collected so far
    (refreshed every 100 iterations from one quarter to three quarters of the
    way through burn-in); otherwise ``L`` is the identity.
    """
    rng = np.random.default_rng(cfg.seed)
    u = np.array(init, dtype=float)
    d = u.size
    lp = float(log_target(u))
    if not math.isfinite(lp):
        raise RuntimeError("log target is not finite at the initial point")
    log_sigma = math.log(cfg.init_step if cfg.init_step is not None else 2.38 / math.sqrt(d))
    chol = np.eye(d)
    first_cov = max(cfg.burn_in // 4, 2 * d + 2)
    last_cov = 3 * cfg.burn_in // 4  # leave sigma time to settle on the final shape
    history = np.empty((cfg.burn_in, d))
    installed = False

    draws = np.empty((cfg.n_record, d))
    accepted = np.zeros(cfg.n_record, dtype=bool)
    log_post = np.empty(cfg.n_record)
    total = cfg.burn_in + cfg.n_record
    for it in range(1, total + 1):
        proposal = u + math.exp(log_sigma) * (chol @ rng.standard_normal(d))
        lp_new = float(log_target(proposal))
        log_ratio = lp_new - lp if math.isfinite(lp_new) else -math.inf
        alpha = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
        accept = rng.random() < alpha
        if accept:
            u, lp = proposal, lp_new
        if it <= cfg.burn_in:
            history[it - 1] = u
            if cfg.adapt:
                log_sigma += it ** (-cfg.adapt_decay) * (alpha - cfg.target_accept)
            if cfg.adapt_covariance and it >= first_cov and it % 100 == 0 and it <= last_cov:
                new = _proposal_factor(history[it // 2:it])
                if new is not None:
                    chol = new
                    if not installed:
                        log_sigma = math.log(2.38 / math.sqrt(d))
                        installed = True
        else:
            k = it - cfg.burn_in - 1
            draws[k] = u
            accepted[k] = accept
            log_post[k] = lp
    return Chain(draws, accepted, log_post, math.exp(log_sigma), list(names or []), proposal_factor=chol)


def _proposal_factor(samples: np.ndarray) -> np.ndarray | None:
    cov = np.atleast_2d(np.cov(samples, rowvar=False))
    d = cov.shape[0]
    scale = np.trace(cov) / d
    if not np.isfinite(scale) or scale <= 0:
        return None
    try:
        return np.linalg.cholesky(cov + 1e-6 * scale * np.eye(d))
    except np.linalg.LinAlgError:
        return None


def sample_posterior(posterior, cfg: McmcConfig, init=None) -> Chain:
    """Run the sampler on a :class:`funbayes.posterior.Posterior`.

    Without ``init`` the default starting point is used, with up to 50
    jittered retries when its log posterior is not finite.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    u0 = posterior.find_init(rng, init=init)
    chain = run_chain(posterior, u0, cfg, posterior.layout.names)
    chain.natural = posterior.layout.to_natural(chain.draws)
    return chain


# ---------------------------------------------------------------------------
# diagnostics


def batch_means(x: np.ndarray, batch_size: int = BATCH_SIZE) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nb = x.shape[0] // batch_size
    if nb < 2:
        raise ValueError(f"need at least two batches of {batch_size} draws")
    trimmed = x[x.shape[0] - nb * batch_size:]
    return trimmed.reshape(nb, batch_size, *x.shape[1:]).mean(axis=1)


def sif(x: np.ndarray, batch_size: int = BATCH_SIZE) -> np.ndarray:
    """Simulation inefficiency factor ``batch_size * Var(batch means) / Var(draws)``."""
    x = np.asarray(x, dtype=float)
    bm = batch_means(x, batch_size)
    var = np.var(x, axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return batch_size * np.var(bm, axis=0, ddof=1) / var


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    ci_low: float
    ci_high: float
    total_se: float
    batch_se: float
    sif: float
    median: float


def summarize(chain: Chain | np.ndarray, transform: Callable[[np.ndarray], np.ndarray] | None = None,
              names: Sequence[str] | None = None, batch_size: int = BATCH_SIZE) -> list[ParamSummary]:
    """Ergodic mean, 95% credible interval, standard errors and SIF per parameter.

    Statistics are computed on ``transform(draws)``; by default a chain's
    back-transformed (natural-scale) draws are used when available.
    """
    if isinstance(chain, Chain):
        names = names or chain.names
        if transform is not None:
            x = transform(chain.draws)
        elif chain.natural is not None:
            x = chain.natural
        else:
            x = chain.draws
    else:
        x = np.asarray(chain, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if transform is not None:
            x = transform(x)
    n = x.shape[0]
    names = list(names or [f"x{k}" for k in range(x.shape[1])])
    factor = sif(x, batch_size)
    bm = batch_means(x, batch_size)
    sd = np.std(x, axis=0, ddof=1)
    lo, med, hi = np.quantile(x, [0.025, 0.5, 0.975], axis=0)
    out = []
    for k in range(x.shape[1]):
        out.append(ParamSummary(
            names[k],
            float(np.mean(x[:, k])),
            float(lo[k]),
            float(hi[k]),
            float(sd[k] / math.sqrt(n) * math.sqrt(factor[k])),
            float(np.std(bm[:, k], ddof=1) / math.sqrt(bm.shape[0])),
            float(factor[k]),
            float(med[k]),
        ))
    return out


def geweke(x: np.ndarray, frac_a: float = 0.1, frac_b: float = 0.5, n_batches: int = 20) -> np.ndarray:
    """Geweke z-scores comparing the first ``frac_a`` and last ``frac_b`` of each column.

    Segment standard errors come from ``n_batches`` batch means per segment.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    na, nb = int(frac_a * n), int(frac_b * n)
    if min(na, nb) < 2 * n_batches:
        raise ValueError(f"Geweke segments need at least {2 * n_batches} draws")
    a, b = x[:na], x[n - nb:]

    def mean_and_se2(seg):
        size = seg.shape[0] // n_batches
        bm = seg[seg.shape[0] - size * n_batches:].reshape(n_batches, size, -1).mean(axis=1)
        return seg.mean(axis=0), np.var(bm, axis=0, ddof=1) / n_batches

    ma, va = mean_and_se2(a)
    mb, vb = mean_and_se2(b)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (ma - mb) / np.sqrt(va + vb)


def autocorrelation(x: np.ndarray, max_lag: int = 50) -> np.ndarray:
    """Sample ACF at lags ``0..max_lag`` for each column."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    c = x - x.mean(axis=0)
    denom = np.sum(c * c, axis=0)
    out = np.empty((max_lag + 1, x.shape[1]))
    for lag in range(max_lag + 1):
        out[lag] = np.sum(c[: n - lag] * c[lag:], axis=0) / denom
    return out


# ---------------------------------------------------------------------------
# marginal likelihood


class EvidenceFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Evidence:
    log_evidence: float
    log_posterior_at_star: float
    log_ordinate: float
    log_numerator: float
    log_denominator: float
    point: np.ndarray


def marginal_likelihood(log_target: LogTarget, chain: Chain, n_proposal_draws: int = 5000,
                        seed: int = 0, point=None) -> Evidence:
    """Log marginal likelihood from Metropolis output (single-block Chib-Jeliazkov).

    ``log_target`` is the unnormalised log posterior (log likelihood plus log
    prior in the sampled coordinates); the posterior ordinate is estimated at
    ``point`` (default: posterior mean of the draws) using the chain's frozen
    Gaussian proposal ``N(u, sigma^2 L L^T)``.
    """
    if n_proposal_draws < 1000:
        raise ValueError("n_proposal_draws must be at least 1000")
    star = np.mean(chain.draws, axis=0) if point is None else np.asarray(point, dtype=float)
    lp_star = float(log_target(star))
    if not math.isfinite(lp_star):
        raise EvidenceFailure("log posterior is not finite at the evaluation point")
    sigma = chain.step_size
    factor = chain.proposal_factor
    d = star.size
    log_norm = (-0.5 * d * math.log(2 * math.pi) - d * math.log(sigma)
                - float(np.sum(np.log(np.abs(np.diag(factor))))))

    # q(u* | u_g) for the Gaussian proposal with covariance sigma^2 L L^T
    white = np.linalg.solve(factor, (chain.draws - star).T).T / sigma
    log_q = log_norm - 0.5 * np.sum(white * white, axis=1)
    log_alpha_to_star = np.minimum(0.0, lp_star - chain.log_post)
    log_num = float(logsumexp(log_alpha_to_star + log_q) - math.log(chain.n_record))

    rng = np.random.default_rng(seed)
    proposals = star + sigma * rng.standard_normal((n_proposal_draws, d)) @ factor.T
    lp_prop = np.array([log_target(v) for v in proposals], dtype=float)
    lp_prop = np.where(np.isfinite(lp_prop), lp_prop, -np.inf)
    log_alpha_from_star = np.minimum(0.0, lp_prop - lp_star)
    log_den = float(logsumexp(log_alpha_from_star) - math.log(n_proposal_draws))
    if not math.isfinite(log_den):
        raise EvidenceFailure(
            f"no proposal from the evaluation point was accepted "
            f"(sigma={sigma:.3g}, max log ratio={np.max(lp_prop) - lp_star:.3g})"
        )
    log_ordinate = log_num - log_den
    return Evidence(lp_star - log_ordinate, lp_star, log_ordinate, log_num, log_den, star)


# ---------------------------------------------------------------------------
# chain files


def write_chain_csv(chain: Chain, path, manifest: str | None = None) -> None:
    """One row per recorded draw: u-space columns, natural-scale columns,
    acceptance flag and log posterior."""
    natural = chain.natural if chain.natural is not None else chain.draws
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest:
            fh.write(f"# {manifest}\n")
        writer = csv.writer(fh)
        writer.writerow([f"u_{n}" for n in chain.names] + list(chain.names) + ["accepted", "log_post"])
        for k in range(chain.n_record):
            writer.writerow(
                [repr(float(v)) for v in chain.draws[k]]
                + [repr(float(v)) for v in natural[k]]
                + [int(chain.accepted[k]), repr(float(chain.log_post[k]))]
            )


def read_chain_csv(path) -> Chain:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], [r for r in rows[1:] if r]
    u_cols = [k for k, h in enumerate(header) if h.startswith("u_")]
    names = [header[k][2:] for k in u_cols]
    nat_cols = [header.index(n) for n in names if n in header]
    if not u_cols:
        # plain draws file: every column other than the traces is a parameter
        u_cols = [k for k, h in enumerate(header) if h not in ("accepted", "log_post")]
        names = [header[k] for k in u_cols]
        nat_cols = u_cols
    data = np.array([[float(v) for v in r] for r in body])
    step = math.nan
    acc_col = header.index("accepted") if "accepted" in header else None
    lp_col = header.index("log_post") if "log_post" in header else None
    n = data.shape[0]
    return Chain(
        data[:, u_cols],
        data[:, acc_col].astype(bool) if acc_col is not None else np.zeros(n, dtype=bool),
        data[:, lp_col] if lp_col is not None else np.zeros(n),
        step,
        names,
        data[:, nat_cols] if len(nat_cols) == len(names) else None,
    )
