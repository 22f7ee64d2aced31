"""Simulation studies, error laws, accuracy metrics and a tecator-shaped surrogate.

Simulated curves are ``a cos 2t + b sin 4t + c (t^2 - pi t + 2 pi^2 / 9)`` on
100 equispaced points of ``[0, pi]`` with ``a, b, c ~ U[0, 1]``.  The
regression function is ``int_0^pi t cos t T'(t)^2 dt`` plus the scalar
covariates of the chosen model.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from .dataset import Dataset, DiscreteKind, derive_binary_group
from .fitting import BayesFit, fit_bayes
from .posterior import PriorSpec
from .regression import FitContext, cv_minimize, nw_fitted
from .sampler import McmcConfig
from .semimetric import DerivSpec

CURVE_POINTS = 100
TRUE_REG_POINTS = 1001
MISE_RANGE = (-5.0, 5.0)
MISE_POINTS = 1001


def curve_grid(size: int = CURVE_POINTS) -> np.ndarray:
    return np.linspace(0.0, math.pi, size)


def eval_curves(coefs: np.ndarray, t: np.ndarray) -> np.ndarray:
    coefs = np.atleast_2d(coefs)
    a, b, c = coefs[:, 0:1], coefs[:, 1:2], coefs[:, 2:3]
    return a * np.cos(2 * t) + b * np.sin(4 * t) + c * (t ** 2 - math.pi * t + 2 * math.pi ** 2 / 9)


def eval_curve_derivatives(coefs: np.ndarray, t: np.ndarray) -> np.ndarray:
    coefs = np.atleast_2d(coefs)
    a, b, c = coefs[:, 0:1], coefs[:, 1:2], coefs[:, 2:3]
    return -2 * a * np.sin(2 * t) + 4 * b * np.cos(4 * t) + c * (2 * t - math.pi)


def gen_curves(n: int, rng: np.random.Generator | int, grid_size: int = CURVE_POINTS):
    """Return ``(grid, curves, coefs)`` for ``n`` random curves."""
    rng = np.random.default_rng(rng)
    coefs = rng.uniform(0.0, 1.0, size=(n, 3))
    grid = curve_grid(grid_size)
    return grid, eval_curves(coefs, grid), coefs


def functional_effect(coefs) -> np.ndarray:
    """``int_0^pi t cos(t) T'(t)^2 dt`` by composite Simpson on 1001 points."""
    t = np.linspace(0.0, math.pi, TRUE_REG_POINTS)
    deriv = eval_curve_derivatives(np.asarray(coefs, dtype=float), t)
    return simpson(t * np.cos(t) * deriv ** 2, x=t, axis=-1)


def true_regression(model: int, coefs, eta, omega, gamma, beta) -> np.ndarray:
    if model not in (1, 2):
        raise ValueError("model must be 1 or 2")
    m = functional_effect(coefs) + np.asarray(eta, dtype=float) + np.asarray(gamma, dtype=float)
    if model == 2:
        m = m + np.asarray(omega, dtype=float) + np.asarray(beta, dtype=float)
    return m


@dataclass(frozen=True)
class MixtureLaw:
    """Finite normal mixture used as the true error law."""

    name: str
    weights: tuple[float, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        w, mu, sd = (np.asarray(v) for v in (self.weights, self.means, self.sds))
        return np.sum(w * np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi)), axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=size, p=self.weights)
        z = rng.standard_normal(size)
        return np.asarray(self.means)[comp] + np.asarray(self.sds)[comp] * z

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @property
    def variance(self) -> float:
        w, mu, sd = (np.asarray(v) for v in (self.weights, self.means, self.sds))
        return float(np.sum(w * (sd ** 2 + mu ** 2)) - self.mean ** 2)


TRIMODAL = MixtureLaw("trimodal", (0.45, 0.45, 0.1), (-1.2, 1.2, 0.0), (0.6, 0.6, 0.25))
CLAW = MixtureLaw(
    "claw",
    (0.5,) + (0.1,) * 5,
    (0.0,) + tuple(l / 2 - 1 for l in range(5)),
    (1.0,) + (0.1,) * 5,
)
LAWS = {"trimodal": TRIMODAL, "claw": CLAW}


def get_law(name: str | MixtureLaw) -> MixtureLaw:
    if isinstance(name, MixtureLaw):
        return name
    try:
        return LAWS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown error law {name!r}") from None


def draw_error(law, rng: np.random.Generator, size: int | None = None):
    draws = get_law(law).sample(rng, 1 if size is None else size)
    return float(draws[0]) if size is None else draws


def density_pdf(law, x):
    return get_law(law).pdf(x)


@dataclass(frozen=True)
class SimConfig:
    n: int = 50
    model: int = 1
    error_law: str = "trimodal"
    n_replications: int = 20
    seed: int = 0
    grid_size: int = CURVE_POINTS

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("simulated samples need n >= 10")
        if self.model not in (1, 2):
            raise ValueError("model must be 1 or 2")
        get_law(self.error_law)


@dataclass
class SimTruth:
    m: np.ndarray
    eps: np.ndarray
    law: MixtureLaw
    coefs: np.ndarray


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, rep])


def simulate_dataset(cfg: SimConfig, rep: int = 0, irrelevant: bool = False) -> tuple[Dataset, SimTruth]:
    """One simulated sample and its ground truth.

    Model 1 observes ``(eta; gamma)``, model 2 ``(eta, omega; gamma, beta)``.
    With ``irrelevant`` the truth is model 1 but the observed regressors are
    ``(eta, xi; gamma, zeta)`` with ``xi ~ N(0, 1)`` and ``zeta`` uniform on
    ``0..5`` carrying no signal.
    """
    rng = replication_rng(cfg.seed, rep)
    grid, curves, coefs = gen_curves(cfg.n, rng, cfg.grid_size)
    eta = rng.standard_normal(cfg.n)
    omega = rng.exponential(1.0, cfg.n)
    gamma = rng.integers(0, 2, cfg.n)
    beta = rng.integers(0, 6, cfg.n)
    law = get_law(cfg.error_law)
    eps = law.sample(rng, cfg.n)
    if irrelevant:
        xi = rng.standard_normal(cfg.n)
        zeta = rng.integers(0, 6, cfg.n)
        m = true_regression(1, coefs, eta, omega, gamma, beta)
        xc, xd = np.column_stack([eta, xi]), np.column_stack([gamma, zeta])
        kinds = (DiscreteKind(2), DiscreteKind(6, ordered=True))
        names = (("eta", "xi"), ("gamma", "zeta"))
    elif cfg.model == 1:
        m = true_regression(1, coefs, eta, omega, gamma, beta)
        xc, xd = eta[:, None], gamma[:, None]
        kinds = (DiscreteKind(2),)
        names = (("eta",), ("gamma",))
    else:
        m = true_regression(2, coefs, eta, omega, gamma, beta)
        xc, xd = np.column_stack([eta, omega]), np.column_stack([gamma, beta])
        kinds = (DiscreteKind(2), DiscreteKind(6, ordered=True))
        names = (("eta", "omega"), ("gamma", "beta"))
    y = m + eps
    ds = Dataset(grid, curves, xc, xd, y, kinds, *names)
    return ds, SimTruth(m, eps, law, coefs)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MeanSd:
    mean: float
    sd: float


def _mean_sd(values: Sequence[float]) -> MeanSd:
    v = np.asarray(values, dtype=float)
    return MeanSd(float(np.mean(v)), float(np.std(v, ddof=1)) if v.size > 1 else 0.0)


def ase(true_m, fitted) -> float:
    diff = np.asarray(true_m, dtype=float) - np.asarray(fitted, dtype=float)
    return float(np.mean(diff * diff))


def mase(true_m: Sequence[Sequence[float]], fitted: Sequence[Sequence[float]]) -> MeanSd:
    """Mean over replications of the average squared error, with its sd across replications."""
    return _mean_sd([ase(t, f) for t, f in zip(true_m, fitted)])


def mise_grid() -> np.ndarray:
    return np.linspace(*MISE_RANGE, MISE_POINTS)


def ise(law, fitted_density, grid=None) -> float:
    grid = mise_grid() if grid is None else np.asarray(grid, dtype=float)
    fitted_density = np.asarray(fitted_density, dtype=float)
    width = grid[-1] - grid[0]
    diff = density_pdf(law, grid) - fitted_density
    return float(width / grid.size * np.sum(diff * diff))


def mise(law, fitted_densities: Sequence[Sequence[float]], grid=None) -> MeanSd:
    return _mean_sd([ise(law, f, grid) for f in fitted_densities])


@dataclass(frozen=True)
class ForecastErrors:
    msfe: float
    mafe: float
    sd_sq: float
    sd_abs: float


def msfe_mafe(y_test, y_pred) -> ForecastErrors:
    err = np.asarray(y_test, dtype=float) - np.asarray(y_pred, dtype=float)
    sq, ab = err * err, np.abs(err)
    ddof = 1 if err.size > 1 else 0
    return ForecastErrors(float(sq.mean()), float(ab.mean()), float(np.std(sq, ddof=ddof)),
                          float(np.std(ab, ddof=ddof)))


def coverage(y_test, lower, upper) -> float:
    y = np.asarray(y_test, dtype=float)
    return float(np.mean((y >= np.asarray(lower)) & (y <= np.asarray(upper))))


# ---------------------------------------------------------------------------
# simulation driver

METHODS = ("bayes-global", "bayes-local", "cv")


@dataclass
class ReplicationResult:
    rep: int
    method: str
    ase: float
    ise: float | None
    bandwidths: dict
    density_mass: float | None = None
    seconds: float = 0.0


def fit_method(method: str, ctx: FitContext, prior: PriorSpec, mcmc: McmcConfig,
               cv_budget: int = 400, seed: int = 0):
    """Fit one bandwidth method; returns ``(fitted values, BayesFit or None, bandwidths)``."""
    if method == "cv":
        res = cv_minimize(ctx, budget=cv_budget, seed=seed)
        return nw_fitted(ctx, res.bandwidths), None, res.bandwidths
    if method not in ("bayes-global", "bayes-local"):
        raise ValueError(f"unknown method {method!r}")
    fit = fit_bayes(ctx, prior, method == "bayes-local", mcmc)
    return fit.fitted(), fit, fit.bandwidths


def density_mass(fit: BayesFit) -> float:
    """Trapezoid integral of the fitted error density over a grid wide enough
    to hold essentially all of its mass."""
    e = np.abs(fit.residuals).max()
    bmax = fit.bandwidths.b * (1 + fit.tau * e)
    half = e + 8 * bmax
    grid = np.linspace(-half, half, 4001)
    return float(trapezoid(fit.density(grid), grid))


def run_replication(cfg: SimConfig, rep: int, methods: Sequence[str] = METHODS,
                    prior: PriorSpec | None = None, mcmc: McmcConfig | None = None,
                    irrelevant: bool = False, cv_budget: int = 400) -> list[ReplicationResult]:
    prior = prior or PriorSpec()
    base = mcmc or McmcConfig()
    ds, truth = simulate_dataset(cfg, rep, irrelevant)
    ctx = FitContext.build(ds, DerivSpec())
    out = []
    for k, method in enumerate(methods):
        t0 = time.perf_counter()
        chain_seed = int(np.random.SeedSequence([cfg.seed, rep, k]).generate_state(1)[0])
        mc = replace(base, seed=chain_seed)
        fitted, fit, bw = fit_method(method, ctx, prior, mc, cv_budget, chain_seed)
        ise_val = mass = None
        bws = bw.to_dict()
        if fit is not None:
            ise_val = ise(truth.law, fit.density(mise_grid()))
            mass = density_mass(fit)
            bws["median"] = {s.name: s.median for s in fit.summary}
            bws["sif"] = {s.name: s.sif for s in fit.summary}
            bws["acceptance"] = fit.chain.acceptance_rate
            if not fit.localized:
                bws.pop("tau")
        else:
            bws.pop("b")
            bws.pop("tau")
        out.append(ReplicationResult(rep, method, ase(truth.m, fitted), ise_val, bws, mass,
                                     time.perf_counter() - t0))
    return out


@dataclass
class SimulationReport:
    config: SimConfig
    methods: tuple[str, ...]
    results: list[ReplicationResult] = field(default_factory=list)

    def by_method(self, method: str) -> list[ReplicationResult]:
        return sorted((r for r in self.results if r.method == method), key=lambda r: r.rep)

    def mase(self, method: str) -> MeanSd:
        return _mean_sd([r.ase for r in self.by_method(method)])

    def mise(self, method: str) -> MeanSd | None:
        vals = [r.ise for r in self.by_method(method) if r.ise is not None]
        return _mean_sd(vals) if vals else None

    def aggregate(self) -> list[dict]:
        rows = []
        for method in self.methods:
            ma, mi = self.mase(method), self.mise(method)
            rows.append({
                "method": method,
                "n": self.config.n,
                "model": self.config.model,
                "error_law": self.config.error_law,
                "replications": len(self.by_method(method)),
                "mase": ma.mean,
                "mase_sd": ma.sd,
                "mise": None if mi is None else mi.mean,
                "mise_sd": None if mi is None else mi.sd,
            })
        return rows


def run_simulation(cfg: SimConfig, methods: Sequence[str] = METHODS, prior: PriorSpec | None = None,
                   mcmc: McmcConfig | None = None, jobs: int = 1, irrelevant: bool = False,
                   cv_budget: int = 400) -> SimulationReport:
    """Run every replication; results are ordered by replication regardless of ``jobs``."""
    methods = tuple(methods)
    reps = range(cfg.n_replications)
    args = [(cfg, rep, methods, prior, mcmc, irrelevant, cv_budget) for rep in reps]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_replication_star, args))
    else:
        chunks = [_run_replication_star(a) for a in args]
    report = SimulationReport(cfg, methods)
    for chunk in chunks:
        report.results.extend(chunk)
    return report


def _run_replication_star(args):
    return run_replication(*args)


@dataclass(frozen=True)
class BandwidthQuantiles:
    name: str
    median: float
    p10: float
    p90: float


def run_irrelevant_study(cfg: SimConfig, prior: PriorSpec | None = None, mcmc: McmcConfig | None = None,
                         method: str = "bayes-global", jobs: int = 1):
    """Model-1 truth fitted with one extra irrelevant continuous and discrete regressor.

    Returns ``(table, sds, report)``: per-parameter median and 10th/90th
    percentiles across replications of the posterior medians, the sample sd
    of each replication's irrelevant continuous regressor, and the raw report.
    """
    report = run_simulation(cfg, (method,), prior, mcmc, jobs, irrelevant=True)
    rows = report.by_method(method)
    names = list(rows[0].bandwidths["median"])
    table = []
    for name in names:
        vals = np.array([r.bandwidths["median"][name] for r in rows])
        table.append(BandwidthQuantiles(name, float(np.median(vals)), float(np.quantile(vals, 0.1)),
                                        float(np.quantile(vals, 0.9))))
    sds = [float(np.std(simulate_dataset(cfg, r.rep, True)[0].xc[:, 1], ddof=1)) for r in rows]
    return table, sds, report


def report_manifest(cfg, seconds: float | None = None, **extra) -> dict:
    out = {"config": asdict(cfg) if hasattr(cfg, "__dataclass_fields__") else cfg}
    if seconds is not None:
        out["seconds"] = seconds
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# tecator-shaped surrogate

TECATOR_N = 215
TECATOR_TRAIN = 160
WAVELENGTHS = np.linspace(850.0, 1050.0, 100)


def _band(centre: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((WAVELENGTHS - centre) / width) ** 2)


def make_tecator_surrogate(seed: int = 0, n: int = TECATOR_N) -> Dataset:
    """Synthetic stand-in with the tecator layout.

    100 absorbance values on 850-1050 nm, continuous regressors (protein,
    moisture), response fat, plus the binary fat < 20 group.  Fat, water and
    protein absorb in bands of different position; baselines vary by a random
    offset and tilt, which the second-derivative semi-metric ignores.
    """
    rng = np.random.default_rng(seed)
    fat = 0.9 + 48.0 * rng.beta(0.9, 1.7, n)
    moisture = 76.0 - 0.74 * fat + rng.normal(0.0, 1.2, n)
    protein = 20.5 - 0.17 * fat + rng.normal(0.0, 0.9, n)
    offset = 2.0 + rng.gamma(4.0, 0.25, n)
    tilt = rng.normal(0.0, 0.15, n)
    nuisance = rng.normal(0.0, 1.0, (n, 3))
    curves = (
        offset[:, None]
        + tilt[:, None] * (WAVELENGTHS - 950.0) / 100.0
        + 0.010 * fat[:, None] * _band(928.0, 14.0)
        + 0.006 * moisture[:, None] * _band(972.0, 22.0)
        + 0.008 * protein[:, None] * _band(1020.0, 18.0)
        + 0.03 * nuisance[:, 0:1] * _band(900.0, 12.0)
        + 0.03 * nuisance[:, 1:2] * _band(945.0, 10.0)
        + 0.02 * nuisance[:, 2:3] * _band(1000.0, 16.0)
    )
    ds = Dataset(WAVELENGTHS, curves, np.column_stack([protein, moisture]),
                 np.zeros((n, 0), dtype=np.int64), fat, (), ("protein", "moisture"), ())
    return derive_binary_group(ds, 20.0, "fat_group")


def tecator_schema_dict(curve_prefix: str = "a") -> dict:
    return {
        "curve_cols": {"prefix": curve_prefix, "count": 100, "start": 0},
        "continuous_cols": ["protein", "moisture"],
        "discrete_cols": [],
        "response_col": "fat",
        "grid": WAVELENGTHS.tolist(),
        "group_threshold": 20.0,
    }


def write_tecator_surrogate(path, schema_path=None, seed: int = 0) -> None:
    """Write the surrogate as CSV (absorbances a0..a99, fat, protein, moisture)."""
    import csv
    import json

    ds = make_tecator_surrogate(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"a{k}" for k in range(100)] + ["fat", "protein", "moisture"])
        for i in range(ds.n):
            writer.writerow([repr(float(v)) for v in ds.curves[i]]
                            + [repr(float(ds.y[i])), repr(float(ds.xc[i, 0])), repr(float(ds.xc[i, 1]))])
    if schema_path is not None:
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump(tecator_schema_dict(), fh, indent=1)
