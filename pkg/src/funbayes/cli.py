"""``funbayes`` command line.

Every command is deterministic under ``--seed``.  Output files start with a
manifest line ``# funbayes <version> config=<hash> seed=<seed>``; JSON outputs
carry the same information under a ``manifest`` key.  Flags can also be set
through ``FUNBAYES_<COMMAND>_<FLAG>`` environment variables.

Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 numerical failure.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import CsvSchema, DataError, Dataset, bootstrap_indices, load_csv
from .errdensity import RangeTooNarrow, error_density_grid, save_grid_csv
from .experiments import (
    METHODS,
    SimConfig,
    coverage,
    density_pdf,
    mise_grid,
    msfe_mafe,
    run_simulation,
    simulate_dataset,
    write_tecator_surrogate,
)
from .fitting import BayesFit, fit_bayes
from .kernels import BandwidthParams
from .posterior import PriorSpec
from .regression import CvFailure, DegenerateWeights, FitContext, cv_minimize, nw_predict, residuals
from .sampler import EvidenceFailure, McmcConfig, autocorrelation, geweke, read_chain_csv, sif, summarize, write_chain_csv
from .semimetric import DerivSpec, FpcaSpec, GridMismatch

EXIT_DATA = 3
EXIT_NUMERIC = 4
DEFAULT_PRIORS = ("ig:1:0.05", "ig:5:0.25", "cauchy")
GEWEKE_LIMIT = 3.0


class CommandFailure(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _guard(fn):
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (DegenerateWeights, EvidenceFailure, CvFailure, RangeTooNarrow, FloatingPointError) as exc:
            raise CommandFailure(f"numerical failure: {exc}", EXIT_NUMERIC) from exc
        except RuntimeError as exc:
            raise CommandFailure(f"numerical failure: {exc}", EXIT_NUMERIC) from exc
        except (DataError, GridMismatch, OSError, KeyError, json.JSONDecodeError) as exc:
            raise CommandFailure(f"data error: {exc}", EXIT_DATA) from exc
        except ValueError as exc:
            raise CommandFailure(f"data error: {exc}", EXIT_DATA) from exc

    return wrapper


# ---------------------------------------------------------------------------
# manifests and writers

def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def manifest_line(config: dict, seed: int) -> str:
    return f"funbayes {__version__} config={config_hash(config)} seed={seed}"


def manifest_dict(config: dict, seed: int, **extra) -> dict:
    out = {"version": __version__, "config_hash": config_hash(config), "seed": seed, "config": config}
    out.update(extra)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, manifest: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {manifest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=1, default=float), encoding="utf-8")


# ---------------------------------------------------------------------------
# flag parsing

def _parse_prior(ctx, param, value):
    try:
        if isinstance(value, tuple):
            return tuple(PriorSpec.parse(v) for v in value)
        return PriorSpec.parse(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc


def _parse_grid(ctx, param, value):
    try:
        lo, hi, count = value.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise click.BadParameter("expected lo:hi:count") from exc
    if not lo < hi:
        raise click.BadParameter("lo must be below hi")
    if count < 101:
        raise click.BadParameter("count must be at least 101")
    return lo, hi, count


def _parse_semimetric(ctx, param, value):
    parts = value.lower().split(":")
    try:
        if parts[0] == "deriv" and len(parts) <= 2:
            return DerivSpec(2, int(parts[1]) if len(parts) == 2 else None)
        if parts[0] == "fpca" and len(parts) == 2:
            return FpcaSpec(int(parts[1]))
    except ValueError:
        pass
    raise click.BadParameter("use deriv, deriv:NBASIS or fpca:K")


def _mcmc(burnin: int, iters: int, seed: int) -> McmcConfig:
    try:
        return McmcConfig(burn_in=burnin, n_record=iters, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


def _load_data(data: str, schema: CsvSchema, require_response: bool = False) -> Dataset:
    grid = None if schema.grid is None else np.array(schema.grid)
    return load_csv(data, schema, grid=grid, require_response=require_response)


def _head(ds: Dataset, train: int | None) -> tuple[Dataset, Dataset | None]:
    if train is None or train >= ds.n:
        return ds, None
    if train < 3:
        raise click.UsageError("--train must be at least 3")
    return ds.subset(np.arange(train)), ds.subset(np.arange(train, ds.n))


def _bandwidth_names(p: int, q: int) -> list[str]:
    return ["delta"] + [f"h{j + 1}" for j in range(p)] + [f"lambda{s + 1}" for s in range(q)] + ["b", "tau"]


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="funbayes")
def cli():
    """Bayesian bandwidth estimation for functional regression with mixed regressors."""


# ---------------------------------------------------------------------------
# simulate

@cli.command()
@click.option("--model", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option("--n", "n", type=click.IntRange(min=10), default=50, show_default=True)
@click.option("--error", "error_law", type=click.Choice(["trimodal", "claw"]), default="trimodal", show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--method", "methods", type=click.Choice(METHODS), multiple=True,
              help="Repeat to run several methods; default runs all three.")
@click.option("--prior", default="ig:1:0.05", show_default=True, callback=_parse_prior)
@click.option("--burnin", type=int, default=1000, show_default=True)
@click.option("--iters", type=int, default=10000, show_default=True)
@click.option("--cv-budget", type=click.IntRange(min=50), default=400, show_default=True)
@click.option("--irrelevant", is_flag=True, help="Add an irrelevant continuous and ordered regressor (Model-1 truth).")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False, writable=True))
@_guard
def simulate(model, n, error_law, reps, seed, methods, prior, burnin, iters, cv_budget, irrelevant, jobs, out):
    """Run the simulation study and write per-replication and aggregate tables."""
    methods = tuple(methods) or METHODS
    model = int(model)
    if irrelevant and model != 1:
        raise click.UsageError("--irrelevant uses the Model-1 truth; drop --model 2")
    if irrelevant and not any(m != "cv" for m in methods):
        raise click.UsageError("--irrelevant reports posterior bandwidths; choose a Bayesian method")
    mcmc = _mcmc(burnin, iters, seed)
    cfg = SimConfig(n=n, model=model, error_law=error_law, n_replications=reps, seed=seed)
    config = {"command": "simulate", "sim": vars(cfg), "methods": list(methods), "prior": prior.to_dict(),
              "burnin": burnin, "iters": iters, "cv_budget": cv_budget, "irrelevant": irrelevant}
    line = manifest_line(config, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    report = run_simulation(cfg, methods, prior, mcmc, jobs, irrelevant, cv_budget)
    elapsed = time.perf_counter() - t0

    probe, _ = simulate_dataset(cfg, 0, irrelevant)
    p, q = probe.p, probe.q
    header = ["rep", "method", "ase", "ise", "density_mass", "acceptance"] + _bandwidth_names(p, q)
    rows = []
    for method in methods:
        for r in report.by_method(method):
            bw = r.bandwidths
            row = [r.rep, method, r.ase, r.ise, r.density_mass, bw.get("acceptance"), bw["delta"]]
            row += list(bw["h"]) + list(bw["lam"]) + [bw.get("b"), bw.get("tau")]
            rows.append(row)
    write_csv(out / "replications.csv", header, rows, line)

    agg = report.aggregate()
    keys = ["method", "n", "model", "error_law", "replications", "mase", "mase_sd", "mise", "mise_sd"]
    write_csv(out / "aggregate.csv", keys, [[a[k] for k in keys] for a in agg], line)

    bayes = [m for m in methods if m != "cv"]
    if bayes:
        # density curves are only defined for the Bayesian methods
        grid = mise_grid()
        truth = density_pdf(cfg.error_law, grid)
        dens_rows = []
        for method in bayes:
            for r in report.by_method(method):
                ds, _ = simulate_dataset(cfg, r.rep, irrelevant)
                ctx = FitContext.build(ds)
                bwp = BandwidthParams(r.bandwidths["delta"], tuple(r.bandwidths["h"]), tuple(r.bandwidths["lam"]),
                                      r.bandwidths["b"], r.bandwidths.get("tau", 0.0))
                fhat = error_density_grid(residuals(ctx, bwp), bwp.b, bwp.tau, grid)
                dens_rows.extend([r.rep, method, u, fh, ft] for u, fh, ft in zip(grid, fhat, truth))
        write_csv(out / "densities.csv", ["rep", "method", "u", "fhat", "ftrue"], dens_rows, line)

    if irrelevant:
        table_rows = []
        for method in bayes:
            recs = report.by_method(method)
            for name in recs[0].bandwidths["median"]:
                vals = np.array([rr.bandwidths["median"][name] for rr in recs])
                table_rows.append([method, name, float(np.median(vals)), float(np.quantile(vals, 0.1)),
                                   float(np.quantile(vals, 0.9))])
        sds = [float(np.std(simulate_dataset(cfg, k, True)[0].xc[:, 1], ddof=1)) for k in range(reps)]
        write_csv(out / "bandwidth_quantiles.csv", ["method", "parameter", "median", "p10", "p90"], table_rows, line)
        config["irrelevant_sd_mean"] = float(np.mean(sds))

    timings = {f"{r.method}:{r.rep}": r.seconds for r in report.results}
    write_json(out / "manifest.json", {"manifest": manifest_dict(config, seed, seconds=elapsed, timings=timings),
                                       "aggregate": agg})
    for a in agg:
        mise = "" if a["mise"] is None else f"  MISE {a['mise']:.4f} ({a['mise_sd']:.4f})"
        click.echo(f"{a['method']:<13} MASE {a['mase']:.4f} ({a['mase_sd']:.4f}){mise}")


# ---------------------------------------------------------------------------
# fit

def _fit(ds: Dataset, spec, prior: PriorSpec, localized: bool, mcmc: McmcConfig) -> BayesFit:
    ctx = FitContext.build(ds, spec)
    return fit_bayes(ctx, prior, localized, mcmc)


def _summary_block(fit: BayesFit) -> dict:
    chain = fit.chain
    natural = chain.natural
    z = geweke(natural)
    return {
        "parameters": [
            {**vars(s), "geweke_z": float(z[k])} for k, s in enumerate(fit.summary)
        ],
        "acceptance_rate": chain.acceptance_rate,
        "final_step_size": chain.step_size,
    }


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--train", type=click.IntRange(min=3), default=None, help="Use the first N rows (default: all).")
@click.option("--prior", default="ig:1:0.05", show_default=True, callback=_parse_prior)
@click.option("--localized/--global", default=False, show_default=True)
@click.option("--semimetric", default="deriv", show_default=True, callback=_parse_semimetric)
@click.option("--burnin", type=int, default=1000, show_default=True)
@click.option("--iters", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--chain-out", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Chain dump path (default: next to --out with suffix .chain.csv).")
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@_guard
def fit(data, schema, train, prior, localized, semimetric, burnin, iters, seed, chain_out, out):
    """Sample the bandwidth posterior and store the fitted model."""
    mcmc = _mcmc(burnin, iters, seed)
    sch = CsvSchema.load(schema)
    ds, _ = _head(_load_data(data, sch, require_response=True), train)
    config = {"command": "fit", "data": str(data), "schema": sch.to_dict(), "train": ds.n,
              "prior": prior.to_dict(), "localized": localized, "semimetric": semimetric.to_dict(),
              "burnin": burnin, "iters": iters}
    t0 = time.perf_counter()
    result = _fit(ds, semimetric, prior, localized, mcmc)
    elapsed = time.perf_counter() - t0
    chain_path = Path(chain_out) if chain_out else Path(out).with_suffix(".chain.csv")
    write_chain_csv(result.chain, chain_path, manifest_line(config, seed))
    result.save(out, {
        "manifest": manifest_dict(config, seed, seconds=elapsed),
        "schema": sch.to_dict(),
        "chain_path": str(chain_path),
        "chain_summary": _summary_block(result),
    })
    click.echo(f"acceptance {result.chain.acceptance_rate:.3f}  step {result.chain.step_size:.4g}")
    for s in result.summary:
        click.echo(f"{s.name:<9} mean {s.mean:.4f}  CI [{s.ci_low:.4f}, {s.ci_high:.4f}]  SIF {s.sif:.2f}")


# ---------------------------------------------------------------------------
# predict

def _manifest_seed(path) -> int:
    """Seed recorded on a file's manifest line, or 0 when absent."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("# funbayes"):
        for token in first.split():
            if token.startswith("seed="):
                return int(token[5:])
    return 0


def _check_compatible(model: BayesFit, ds: Dataset) -> None:
    train = model.ctx.dataset
    if ds.p != train.p or ds.q != train.q:
        raise DataError(f"data has p={ds.p}, q={ds.q} regressors but the model expects p={train.p}, q={train.q}")
    if ds.grid.shape != train.grid.shape or not np.allclose(ds.grid, train.grid):
        raise GridMismatch("data curves use a different grid from the training curves")
    for s, (a, b) in enumerate(zip(ds.kinds, train.kinds)):
        if a != b:
            raise DataError(f"discrete regressor {s + 1} has kind {a} but the model expects {b}")


def _forecast(model: BayesFit, test: Dataset, level: float, grid):
    point = model.predict(test)
    lo, hi = model.intervals(point, level, *grid)
    return point, lo, hi


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Defaults to the schema stored in the model file.")
@click.option("--test-from", type=click.IntRange(min=0), default=0, show_default=True,
              help="Forecast rows from this index on (e.g. 160 for a learning/testing split of one file).")
@click.option("--interval", type=float, default=0.95, show_default=True)
@click.option("--grid", default="-10:10:1001", show_default=True, callback=_parse_grid)
@click.option("--density-out", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Also write the fitted error density on the grid.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@_guard
def predict(model_path, data, schema, test_from, interval, grid, density_out, out):
    """Point forecasts and pointwise prediction intervals."""
    if not 0.0 < interval < 1.0:
        raise click.BadParameter("must lie strictly between 0 and 1", param_hint="--interval")
    raw = json.loads(Path(model_path).read_text(encoding="utf-8"))
    model = BayesFit.from_dict(raw)
    if schema is not None:
        sch = CsvSchema.load(schema)
    elif "schema" in raw:
        sch = CsvSchema.from_dict(raw["schema"])
    else:
        raise click.UsageError("model file has no stored schema; pass --schema")
    ds = _load_data(data, sch)
    if test_from >= ds.n:
        raise click.UsageError(f"--test-from {test_from} leaves no rows out of {ds.n}")
    test = ds.subset(np.arange(test_from, ds.n))
    _check_compatible(model, test)
    point, lo, hi = _forecast(model, test, interval, grid)
    seed = raw.get("manifest", {}).get("seed", 0)
    config = {"command": "predict", "model": config_hash(raw.get("manifest", {})), "data": str(data),
              "test_from": test_from, "interval": interval, "grid": list(grid)}
    line = manifest_line(config, seed)
    header = ["row", "forecast", "lower", "upper"] + (["y"] if test.has_response else [])
    rows = []
    for k in range(test.n):
        row = [test_from + k, point[k], lo[k], hi[k]]
        if test.has_response:
            row.append(test.y[k])
        rows.append(row)
    write_csv(out, header, rows, line)
    if density_out:
        u = np.linspace(*grid[:2], grid[2])
        save_grid_csv(density_out, u, model.density(u), header=f"# {line}\nu,density")
    if test.has_response:
        err = msfe_mafe(test.y, point)
        cov = coverage(test.y, lo, hi)
        click.echo(f"MSFE {err.msfe:.4f} ({err.sd_sq:.4f})  MAFE {err.mafe:.4f} ({err.sd_abs:.4f})  "
                   f"coverage {cov:.3f}")
    click.echo(f"{test.n} forecasts written to {out}")


# ---------------------------------------------------------------------------
# diagnose

@cli.command()
@click.option("--chain", "chain_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-lag", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, writable=True), default=None,
              help="Directory for trace.csv, acf.csv and diagnostics.json.")
@_guard
def diagnose(chain_path, max_lag, out):
    """Trace, autocorrelation, SIF, Geweke and acceptance diagnostics for a chain dump."""
    chain = read_chain_csv(chain_path)
    x = chain.natural if chain.natural is not None else chain.draws
    names = chain.names
    if x.shape[0] < 1000:
        raise DataError(f"chain has {x.shape[0]} draws; diagnostics need at least 1000")
    if np.any(chain.accepted):
        acc = chain.acceptance_rate
    else:
        # no acceptance trace in the file: a move is any change of state
        acc = float(np.mean(np.any(np.diff(chain.draws, axis=0) != 0, axis=1)))
    factors = sif(x)
    z = geweke(x)
    acf = np.column_stack([autocorrelation(x[:, k], max_lag) for k in range(x.shape[1])])
    summary = summarize(x, names=names)
    flagged = [names[k] for k in range(len(names)) if abs(z[k]) > GEWEKE_LIMIT]
    report = {
        "acceptance_rate": acc,
        "parameters": [
            {"name": names[k], "mean": summary[k].mean, "sif": float(factors[k]), "geweke_z": float(z[k]),
             "batch_se": summary[k].batch_se, "total_se": summary[k].total_se}
            for k in range(len(names))
        ],
        "geweke_flagged": flagged,
    }
    config = {"command": "diagnose", "chain": str(chain_path), "max_lag": max_lag}
    seed = _manifest_seed(chain_path)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        line = manifest_line(config, seed)
        write_csv(out / "trace.csv", ["iteration"] + names,
                  ([i] + list(x[i]) for i in range(x.shape[0])), line)
        write_csv(out / "acf.csv", ["lag"] + names, ([lag] + list(acf[lag]) for lag in range(max_lag + 1)), line)
        write_json(out / "diagnostics.json", {"manifest": manifest_dict(config, seed), **report})
    click.echo(f"draws {x.shape[0]}  acceptance {acc:.3f}")
    for p in report["parameters"]:
        mark = "  GEWEKE FLAG" if p["name"] in flagged else ""
        click.echo(f"{p['name']:<9} mean {p['mean']:.4f}  SIF {p['sif']:.2f}  Geweke z {p['geweke_z']:+.2f}{mark}")
    if flagged:
        click.echo(f"Geweke |z| > {GEWEKE_LIMIT:g} for: {', '.join(flagged)}")


# ---------------------------------------------------------------------------
# compare-priors

@cli.command("compare-priors")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--train", type=click.IntRange(min=3), default=None)
@click.option("--prior", "priors", multiple=True, default=DEFAULT_PRIORS, show_default=True, callback=_parse_prior)
@click.option("--localized/--global", default=False, show_default=True)
@click.option("--include-cv", is_flag=True, help="Add a cross-validation row.")
@click.option("--semimetric", default="deriv", show_default=True, callback=_parse_semimetric)
@click.option("--burnin", type=int, default=1000, show_default=True)
@click.option("--iters", type=int, default=10000, show_default=True)
@click.option("--proposal-draws", type=click.IntRange(min=1000), default=5000, show_default=True)
@click.option("--interval", type=float, default=0.95, show_default=True)
@click.option("--grid", default="-10:10:1001", show_default=True, callback=_parse_grid)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@_guard
def compare_priors(data, schema, train, priors, localized, include_cv, semimetric, burnin, iters,
                   proposal_draws, interval, grid, seed, out):
    """Fit once per prior; tabulate forecast accuracy, log marginal likelihood and coverage."""
    if not 0.0 < interval < 1.0:
        raise click.BadParameter("must lie strictly between 0 and 1", param_hint="--interval")
    mcmc = _mcmc(burnin, iters, seed)
    sch = CsvSchema.load(schema)
    ds, test = _head(_load_data(data, sch, require_response=True), train)
    config = {"command": "compare-priors", "data": str(data), "schema": sch.to_dict(), "train": ds.n,
              "priors": [p.to_dict() for p in priors], "localized": localized, "include_cv": include_cv,
              "semimetric": semimetric.to_dict(), "burnin": burnin, "iters": iters,
              "proposal_draws": proposal_draws, "interval": interval, "grid": list(grid)}
    header = ["method", "prior", "msfe", "msfe_sd", "mafe", "mafe_sd", "log_ml", "coverage"]
    rows = []
    ctx = FitContext.build(ds, semimetric)
    if include_cv:
        res = cv_minimize(ctx, seed=seed)
        row = ["cv", "", None, None, None, None, None, None]
        if test is not None:
            err = msfe_mafe(test.y, nw_predict(ctx, res.bandwidths, test))
            row[2:6] = [err.msfe, err.sd_sq, err.mafe, err.sd_abs]
        rows.append(row)
    method = "bayes-local" if localized else "bayes-global"
    for prior in priors:
        result = fit_bayes(ctx, prior, localized, mcmc)
        ev = result.log_marginal_likelihood(proposal_draws, seed)
        row = [method, prior.label(), None, None, None, None, ev.log_evidence, None]
        if test is not None:
            point, lo, hi = _forecast(result, test, interval, grid)
            err = msfe_mafe(test.y, point)
            row[2:6] = [err.msfe, err.sd_sq, err.mafe, err.sd_abs]
            row[7] = coverage(test.y, lo, hi)
        rows.append(row)
    write_csv(out, header, rows, manifest_line(config, seed))
    for row in rows:
        cells = [f"{h} {v:.4f}" for h, v in zip(header[2:], row[2:]) if v is not None]
        click.echo(f"{row[0]:<13} {row[1]:<12} " + "  ".join(cells))


# ---------------------------------------------------------------------------
# evaluate (bootstrap comparison)

def _bootstrap_one(args):
    ds, train, rep, seed, methods, prior, mcmc, spec = args
    idx = bootstrap_indices(ds.n, int(np.random.SeedSequence([seed, rep]).generate_state(1)[0]))
    sample = ds.subset(idx)
    learn, test = sample.subset(np.arange(train)), sample.subset(np.arange(train, ds.n))
    ctx = FitContext.build(learn, spec)
    out = []
    for k, method in enumerate(methods):
        chain_seed = int(np.random.SeedSequence([seed, rep, k]).generate_state(1)[0])
        if method == "cv":
            bw = cv_minimize(ctx, seed=chain_seed).bandwidths
        else:
            bw = fit_bayes(ctx, prior, method == "bayes-local", replace(mcmc, seed=chain_seed)).bandwidths
        err = msfe_mafe(test.y, nw_predict(ctx, bw, test))
        out.append([rep, method, err.msfe, err.mafe])
    return out


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--train", type=click.IntRange(min=3), required=True)
@click.option("--reps", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--method", "methods", type=click.Choice(METHODS), multiple=True)
@click.option("--prior", default="ig:1:0.05", show_default=True, callback=_parse_prior)
@click.option("--semimetric", default="deriv", show_default=True, callback=_parse_semimetric)
@click.option("--burnin", type=int, default=1000, show_default=True)
@click.option("--iters", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@_guard
def evaluate(data, schema, train, reps, methods, prior, semimetric, burnin, iters, seed, jobs, out):
    """Bootstrap comparison of forecast accuracy across bandwidth methods."""
    methods = tuple(methods) or METHODS
    mcmc = _mcmc(burnin, iters, seed)
    sch = CsvSchema.load(schema)
    ds = _load_data(data, sch, require_response=True)
    if train >= ds.n:
        raise click.UsageError(f"--train {train} leaves no rows for forecasting out of {ds.n}")
    args = [(ds, train, rep, seed, methods, prior, mcmc, semimetric) for rep in range(reps)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_bootstrap_one, args))
    else:
        chunks = [_bootstrap_one(a) for a in args]
    rows = [r for chunk in chunks for r in chunk]
    config = {"command": "evaluate", "data": str(data), "schema": sch.to_dict(), "train": train, "reps": reps,
              "methods": list(methods), "prior": prior.to_dict(), "semimetric": semimetric.to_dict(),
              "burnin": burnin, "iters": iters}
    write_csv(out, ["rep", "method", "msfe", "mafe"], rows, manifest_line(config, seed))
    for method in methods:
        vals = np.array([[r[2], r[3]] for r in rows if r[1] == method])
        click.echo(f"{method:<13} RMSFE {math.sqrt(vals[:, 0].mean()):.4f}  MAFE {vals[:, 1].mean():.4f}")


# ---------------------------------------------------------------------------
# surrogate data

@cli.command("make-surrogate")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--schema-out", required=True, type=click.Path(dir_okay=False, writable=True))
@_guard
def make_surrogate(seed, out, schema_out):
    """Write a synthetic spectroscopy dataset with the tecator layout plus its schema."""
    write_tecator_surrogate(out, schema_out, seed)
    click.echo(f"wrote {out} and {schema_out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="funbayes", auto_envvar_prefix="FUNBAYES", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
