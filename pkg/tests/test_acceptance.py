"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Criteria 5-9 run the Monte Carlo studies and take several minutes each.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from conftest import ACCEPTANCE_LINES, make_dataset
from funbayes.dataset import Dataset, split
from funbayes.errdensity import error_cdf, error_cdf_inverse, error_density_grid, localized_loo_kde, loo_kde
from funbayes.experiments import (
    SimConfig,
    coverage,
    density_mass,
    make_tecator_surrogate,
    msfe_mafe,
    run_irrelevant_study,
    run_simulation,
)
from funbayes.fitting import fit_bayes
from funbayes.kernels import BandwidthParams, aitchison_aitken, continuous_kernel, functional_kernel, li_racine
from funbayes.posterior import PriorSpec, log_kernel_likelihood
from funbayes.regression import CvBounds, FitContext, cv_minimize, cv_objective, nw_loo_fitted
from funbayes.sampler import McmcConfig, geweke, marginal_likelihood, run_chain, sif
from funbayes.semimetric import DerivSpec, distance, fit_semimetric, fit_spline_basis

pytestmark = pytest.mark.acceptance

SQ2PI = math.sqrt(2 * math.pi)


def record(number, ok, detail, informational=False):
    tag = "PASS" if ok else "FAIL"
    if informational:
        tag += " (informational)"
    line = f"criterion {number}: {tag}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def npdf(x):
    return math.exp(-0.5 * x * x) / SQ2PI


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_kernel_semimetric_exactness():
    t0 = time.perf_counter()
    checks = []
    checks.append(abs(functional_kernel(0.0, 1.0) - 0.39894) < 1e-5)
    checks.append(abs(functional_kernel(1.0, 1.0) - 0.24197) < 1e-5)
    checks.append(math.isclose(functional_kernel(2.0, 3.0), functional_kernel(1.0, 1.5) / 2, rel_tol=1e-12))
    checks.append(abs(continuous_kernel([0, 0], [1, 2]) - 0.07958) < 1e-5)
    checks.append(aitchison_aitken(1, 1, 0.3) == pytest.approx(0.7) and aitchison_aitken(0, 1, 0.3) == 0.3)
    checks.append(li_racine(0, 2, 0.5) == 0.25 and li_racine(2, 2, 0.5) == 1.0)
    checks.append(abs(loo_kde([0, 0, 0], 0, 1) - 0.39894) < 1e-5)
    checks.append(abs(loo_kde([0, 1, 2], 1, 1) - 0.24197) < 1e-5)
    checks.append(abs(localized_loo_kde([0, 0, 2], 0, 1, 0.5) - 0.25996) < 1e-5)
    res = np.array([-1.1, 0.2, 0.9, 2.5])
    checks.append(all(localized_loo_kde(res, i, 0.6, 0.0) == loo_kde(res, i, 0.6) for i in range(4)))
    half = 2.5 + 8 * 0.6 * (1 + 0.4 * 2.5)
    grid = np.linspace(-half, half, 1001)
    checks.append(abs(trapezoid(error_density_grid(res, 0.6, 0.4, grid), grid) - 1) < 1e-3)
    checks.append(bool(np.all(np.diff(error_cdf(res, 0.6, 0.4, grid)) >= 0)))
    checks.append(abs(error_cdf_inverse([-1.0, 1.0], 0.5, 0.0, [0.5])[0]) <= 0.02)

    t = np.linspace(0, math.pi, 100)
    spec = DerivSpec(2)
    basis = fit_spline_basis(t, 20)
    # cos 2t against sin 4t: int (4 cos 2t + 16 sin 4t)^2 = 136 pi
    d2 = distance(spec, basis, np.cos(2 * t), np.sin(4 * t))
    checks.append(abs(d2 - math.sqrt(136 * math.pi)) < 1e-2)
    checks.append(distance(spec, basis, 1 + 2 * t, 3 - t) < 1e-8)
    checks.append(abs(distance(spec, basis, t ** 2, np.zeros_like(t)) - math.sqrt(4 * math.pi)) < 1e-3)
    elapsed = time.perf_counter() - t0
    ok = all(checks) and elapsed < 1.0
    assert record(1, ok, f"{sum(checks)}/{len(checks)} checks, d2={d2:.4f} vs sqrt(136 pi)="
                         f"{math.sqrt(136 * math.pi):.4f}, {elapsed:.2f}s")


# -- 2 ----------------------------------------------------------------------

def brute_nw_loo(ds, bw):
    n = ds.n
    spec = DerivSpec()
    fit = fit_semimetric(spec, ds)
    out = []
    for i in range(n):
        num = den = 0.0
        for j in range(n):
            if j == i:
                continue
            d = distance(spec, fit, ds.curves[i], ds.curves[j])
            w = npdf(d / bw.delta) / bw.delta
            w *= npdf((ds.xc[j, 0] - ds.xc[i, 0]) / bw.h[0]) / bw.h[0]
            w *= (1 - bw.lam[0]) if ds.xd[j, 0] == ds.xd[i, 0] else bw.lam[0]
            num += w * ds.y[j]
            den += w
        out.append(num / den)
    return np.array(out)


def brute_loo_kde(res, i, b):
    return sum(npdf((res[i] - res[j]) / b) / b for j in range(len(res)) if j != i) / (len(res) - 1)


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    ds = make_dataset(n=10, seed=21)
    ctx = FitContext.build(ds)
    bw = BandwidthParams(0.7, (0.9,), (0.3,), 0.8)
    fitted = nw_loo_fitted(ctx, bw)
    brute = brute_nw_loo(ds, bw)
    err_nw = float(np.max(np.abs(fitted - brute)))
    res = ds.y - brute
    err_kde = max(abs(loo_kde(res, i, 0.8) - brute_loo_kde(res, i, 0.8)) for i in range(10))
    brute_ll = sum(math.log(brute_loo_kde(res, i, 0.8)) for i in range(10))
    err_ll = abs(log_kernel_likelihood(ctx, bw) - brute_ll)

    rng = np.random.default_rng(1)
    grid_t = np.linspace(0, 1, 30)
    a = rng.uniform(-1, 1, 20)
    one = Dataset(grid_t, a[:, None] * grid_t[None, :] ** 2, np.zeros((20, 0)), np.zeros((20, 0), dtype=int),
                  np.sin(3 * a) + rng.normal(scale=0.1, size=20), ())
    octx = FitContext.build(one)
    bounds = CvBounds.default(octx)
    deltas = np.exp(np.linspace(math.log(bounds.delta[0] / 10), math.log(bounds.delta[1] * 10), 1000))
    best = deltas[int(np.argmin([cv_objective(octx, BandwidthParams(d)) for d in deltas]))]
    found = cv_minimize(octx, bounds, budget=300).bandwidths.delta
    rel = abs(found - best) / best
    elapsed = time.perf_counter() - t0
    ok = max(err_nw, err_kde, err_ll) < 1e-12 and rel < 0.1 and elapsed < 10
    assert record(2, ok, f"max NW err {err_nw:.1e}, KDE err {err_kde:.1e}, loglik err {err_ll:.1e}, "
                         f"CV delta {found:.4g} vs grid {best:.4g} ({100 * rel:.1f}%), {elapsed:.1f}s")


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_sampler_calibration():
    t0 = time.perf_counter()
    chain = run_chain(lambda u: -0.5 * float(u @ u), [3.0, -3.0], McmcConfig(seed=0))
    mean_err = float(np.max(np.abs(chain.draws.mean(axis=0))))
    var_err = float(np.max(np.abs(chain.draws.var(axis=0) - 1)))
    rng = np.random.default_rng(0)
    x = np.empty(10_000)
    x[0] = rng.normal()
    eps = rng.normal(size=x.size) * math.sqrt(1 - 0.81)
    for k in range(1, x.size):
        x[k] = 0.9 * x[k - 1] + eps[k]
    ar_sif = float(sif(x))
    z = np.abs(geweke(rng.normal(size=(10_000, 4)))).max()
    elapsed = time.perf_counter() - t0
    ok = mean_err < 0.05 and var_err < 0.1 and abs(ar_sif - 19) <= 0.3 * 19 and z < 3 and elapsed < 60
    assert record(3, ok, f"mean err {mean_err:.3f}, var err {var_err:.3f}, AR(1) SIF {ar_sif:.1f}, "
                         f"iid max|z| {z:.2f}, {elapsed:.1f}s")


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_evidence_oracle():
    t0 = time.perf_counter()
    n, tau = 20, 2.0
    y = np.random.default_rng(0).normal(loc=1.0, size=n)

    def log_target(u):
        t = float(u[0])
        return (-0.5 * n * math.log(2 * math.pi) - 0.5 * float(np.sum((y - t) ** 2))
                - 0.5 * math.log(2 * math.pi * tau ** 2) - 0.5 * t * t / tau ** 2)

    exact = float(stats.multivariate_normal(np.zeros(n), np.eye(n) + tau ** 2).logpdf(y))
    chain = run_chain(log_target, [0.0], McmcConfig(seed=4))
    est = marginal_likelihood(log_target, chain, 5000, seed=0).log_evidence
    elapsed = time.perf_counter() - t0
    ok = abs(est - exact) < 0.05 and elapsed < 60
    assert record(4, ok, f"log evidence {est:.4f} vs exact {exact:.4f}, {elapsed:.1f}s")


# -- 5, 6, 9 ----------------------------------------------------------------

MASS_RESULTS: dict[str, list[float]] = {}


@pytest.fixture(scope="module")
def table_study():
    t0 = time.perf_counter()
    report = run_simulation(SimConfig(n=50, model=1, error_law="trimodal", n_replications=20, seed=0))
    MASS_RESULTS["criterion 5-6"] = [r.density_mass for r in report.results if r.density_mass is not None]
    return report, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_5_localized_mise(table_study):
    report, elapsed = table_study
    loc, glob = report.mise("bayes-local"), report.mise("bayes-global")
    ok = loc.mean < glob.mean and loc.mean < 0.08
    assert record(5, ok, f"MISE local {loc.mean:.4f} ({loc.sd:.4f}) vs global {glob.mean:.4f} ({glob.sd:.4f}); "
                         f"direction {'holds' if loc.mean < glob.mean else 'fails'}, "
                         f"local < 0.08 {'holds' if loc.mean < 0.08 else 'fails'}; {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_6_mase_ratio(table_study):
    report, _ = table_study
    cv = report.mase("cv").mean
    parts = []
    ok = True
    for method in ("bayes-global", "bayes-local"):
        m = report.mase(method).mean
        ok &= m <= 1.1 * cv
        parts.append(f"{method} {m:.3f} (ratio {m / cv:.3f})")
    assert record(6, ok, f"MASE cv {cv:.3f}; " + ", ".join(parts))


# -- 7 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_irrelevant_regressors():
    t0 = time.perf_counter()
    table, sds, report = run_irrelevant_study(SimConfig(n=150, model=1, n_replications=10, seed=0))
    MASS_RESULTS["criterion 7"] = [r.density_mass for r in report.results]
    q = {row.name: row for row in table}
    h2 = [r.bandwidths["median"]["h2"] for r in report.results]
    h2_ratio = float(np.median(np.array(h2) / np.array(sds)))
    ok = q["lambda2"].median > 0.85 and h2_ratio > 2 and q["lambda1"].median < 0.6
    elapsed = time.perf_counter() - t0
    assert record(7, ok, f"lambda2 median {q['lambda2'].median:.3f} [{q['lambda2'].p10:.3f}, {q['lambda2'].p90:.3f}], "
                         f"h2/sd median {h2_ratio:.1f}, lambda1 median {q['lambda1'].median:.3f}; "
                         f"{elapsed / 60:.1f} min")


# -- 8 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_tecator_surrogate():
    """The public tecator file is not bundled; the surrogate run is informational."""
    t0 = time.perf_counter()
    train, test = split(make_tecator_surrogate(0), 160)
    ctx = FitContext.build(train)
    fits, log_ml = {}, {}
    for label, prior in (("ig1", PriorSpec("ig", 1, 0.05)), ("ig5", PriorSpec("ig", 5, 0.25)),
                         ("cauchy", PriorSpec("cauchy"))):
        fit = fit_bayes(ctx, prior, localized=True, cfg=McmcConfig(seed=0))
        fits[label] = fit
        log_ml[label] = fit.log_marginal_likelihood(5000, seed=0).log_evidence
    MASS_RESULTS["criterion 8"] = [density_mass(f) for f in fits.values()]
    ig1 = fits["ig1"]
    point = ig1.predict(test)
    lo, hi = ig1.intervals(point, 0.95)
    err = msfe_mafe(test.y, point)
    cov = coverage(test.y, lo, hi)
    ok = 1.2 <= err.msfe <= 2.0 and 0.85 <= cov <= 0.97 and log_ml["cauchy"] >= log_ml["ig5"]
    elapsed = time.perf_counter() - t0
    record(8, ok, f"surrogate data: local IG(1,0.05) MSFE {err.msfe:.3f}, coverage {cov:.3f}; log-ML "
                  f"IG(1,0.05) {log_ml['ig1']:.2f}, IG(5,0.25) {log_ml['ig5']:.2f}, Cauchy {log_ml['cauchy']:.2f}; "
                  f"{elapsed / 60:.1f} min", informational=True)
    # informational on the surrogate; the run itself must complete with finite output
    assert math.isfinite(err.msfe) and all(math.isfinite(v) for v in log_ml.values())


# -- 9 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_9_density_mass():
    masses = [m for group in MASS_RESULTS.values() for m in group]
    if not masses:
        pytest.skip("criteria 5-8 did not run in this session")
    worst = max(abs(m - 1) for m in masses)
    ok = worst <= 1e-3
    assert record(9, ok, f"{len(masses)} fitted densities from {', '.join(MASS_RESULTS)}; max |mass - 1| = {worst:.2e}")
