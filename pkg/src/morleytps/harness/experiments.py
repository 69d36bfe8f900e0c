"""Experiment runners: parameter sweep, rate study, self-consistent selection,
tail behaviour, and interpolation / enrichment rate tables.

Every runner returns an ExperimentReport; ``write_report`` turns it into CSV
files (the deterministic contract), a ``key = value`` config echo and an
SVG figure.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..enrichment import ArgyrisSpace, broken_distance, edge_mismatch, enrich, hat_distance_n
from ..errors import InvalidArgument
from ..mesh import build_uniform_mesh
from ..morley import MorleySpace, interpolate, interpolation_errors
from ..smoother import (
    SmootherConfig,
    mesh_divisions_for_lambda,
    optimal_lambda,
    self_consistent_lambda,
    write_trace_csv,
)
from ..system import DiscreteSmoother, SampleSet, empirical_norm
from . import plotting
from .data import RHO_U0, NoiseModel, generate_samples, make_rng, test_function_u0

SWEEP_LAMBDAS = tuple(10.0**-k for k in range(11))
RATE_MESHES = (8, 16, 32, 64)
DEFAULT_RATE_NS = (2500, 10_000, 40_000)
MAX_N = 40_000


@dataclass(eq=False)
class ExperimentReport:
    experiment: str
    config: dict
    columns: list
    rows: list
    summary: dict
    wall_clock: float = 0.0
    tables: dict = field(default_factory=dict)
    figure: Callable | None = field(default=None, repr=False)
    trace: object = field(default=None, repr=False)

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def workers() -> int:
    env = os.environ.get("TPS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgument(f"TPS_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(fn, items):
    items = list(items)
    nw = min(workers(), len(items))
    if nw <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(fn, items))


def observed_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _check_n(n):
    if n > MAX_N:
        raise InvalidArgument(f"n={n} exceeds the desk-scale cap {MAX_N}; pass max_n to override")


def run_lambda_sweep(
    n: int = 2500,
    noise: NoiseModel = NoiseModel("gaussian", 1.0),
    lambdas=SWEEP_LAMBDAS,
    seed: int = 0,
    m_max: int = 200,
    truth=test_function_u0,
    max_n: int = MAX_N,
) -> ExperimentReport:
    """Fit each lambda on the mesh ``m = round(lam**-1/4)`` and record ``||u0 - u_h||_n``."""
    if n > max_n:
        _check_n(n)
    t0 = time.perf_counter()
    samples = generate_samples(n, noise=noise, seed=seed, truth=truth)

    def one(lam):
        m = mesh_divisions_for_lambda(lam, m_max)
        fit = DiscreteSmoother(MorleySpace(build_uniform_mesh(m)), samples).solve(lam)
        err = empirical_norm(fit.fitted - samples.truth)
        return (lam, m, err, fit.residual_n, fit.seminorm_2h, fit.solver_iters)

    rows = _map(one, lambdas)
    errors = np.array([r[2] for r in rows])
    best = int(np.argmin(errors))
    summary = {
        "best_lambda": rows[best][0],
        "best_error_n": rows[best][2],
        "best_mesh_div": rows[best][1],
    }
    lam_arr = np.array([r[0] for r in rows])
    if np.any(np.isclose(lam_arr, 1e-2)):
        summary["error_n_at_1e-2"] = rows[int(np.argmin(abs(lam_arr - 1e-2)))][2]
    report = ExperimentReport(
        experiment="ex1",
        config={"n": n, "noise": noise.describe(), "seed": seed, "m_max": m_max, "lambdas": len(rows)},
        columns=["lambda", "mesh_div", "error_n", "residual_n", "seminorm_2h", "cg_iters"],
        rows=rows,
        summary=summary,
        wall_clock=time.perf_counter() - t0,
    )
    report.figure = lambda p: plotting.lambda_sweep(p, lam_arr, errors, summary["best_lambda"])
    return report


def run_rate_study(
    ns=DEFAULT_RATE_NS,
    noise: NoiseModel = NoiseModel("gaussian", 1.0),
    seed: int = 0,
    replicates: int = 10,
    rho: float = RHO_U0,
    m_max: int = 200,
    max_n: int = MAX_N,
) -> ExperimentReport:
    """Mean error over replicates against ``sqrt(lam)`` with lam from the optimal rule."""
    ns = [int(n) for n in ns]
    for n in ns:
        if n > max_n:
            _check_n(n)
    if replicates < 1:
        raise InvalidArgument("need at least one replicate")
    t0 = time.perf_counter()
    rows = []
    for n in ns:
        lam = optimal_lambda(noise.sigma, n, rho)
        m = mesh_divisions_for_lambda(lam, m_max)
        base = generate_samples(n, noise=NoiseModel("none"), seed=seed)
        smoother = DiscreteSmoother(MorleySpace(build_uniform_mesh(m)), base)

        def one(r, n=n, lam=lam, smoother=smoother, base=base):
            y = base.truth + noise.sample(make_rng(seed, r), n)
            fit = smoother.solve(lam, y=y)
            return empirical_norm(fit.fitted - base.truth)

        errs = np.array(_map(one, range(replicates)))
        rows.append((n, lam, math.sqrt(lam), m, float(errs.mean()), float(errs.std(ddof=1)) if replicates > 1 else 0.0, replicates))
    x = np.array([r[2] for r in rows])
    y = np.array([r[4] for r in rows])
    summary = {"points": len(rows)}
    if len(rows) < 2 or np.ptp(x) == 0.0:
        summary.update(insufficient_spread=True, slope=float("nan"), intercept=float("nan"), pearson_r=float("nan"))
    else:
        slope, intercept = np.polyfit(x, y, 1)
        summary.update(
            insufficient_spread=False,
            slope=float(slope),
            intercept=float(intercept),
            pearson_r=float(np.corrcoef(x, y)[0, 1]),
        )
    report = ExperimentReport(
        experiment="ex2",
        config={"ns": ";".join(map(str, ns)), "noise": noise.describe(), "seed": seed, "replicates": replicates, "rho": rho, "m_max": m_max},
        columns=["n", "lambda", "sqrt_lambda", "mesh_div", "mean_error_n", "std_error_n", "replicates"],
        rows=rows,
        summary=summary,
        wall_clock=time.perf_counter() - t0,
    )
    if not summary["insufficient_spread"]:
        report.figure = lambda p: plotting.linear_fit(
            p, x, y, summary["slope"], summary["intercept"], r"$\lambda_n^{1/2}$", r"mean $\|u_0-\hat u_h\|_n$"
        )
    return report


def run_self_consistent(
    n: int = 2500,
    noise: NoiseModel = NoiseModel("gaussian", 1.0),
    seed: int = 0,
    config: SmootherConfig = SmootherConfig(),
    truth=test_function_u0,
    rho: float = RHO_U0,
    max_n: int = MAX_N,
) -> ExperimentReport:
    if n > max_n:
        _check_n(n)
    t0 = time.perf_counter()
    samples = generate_samples(n, noise=noise, seed=seed, truth=truth)
    trace = self_consistent_lambda(samples, None, config)
    rows = [(it.k, it.lam, it.mesh_div, it.residual_n, it.seminorm_2h, it.error_n) for it in trace.iterations]
    last = trace.iterations[-1]
    summary = {
        "converged": trace.converged,
        "iterations": len(trace.iterations),
        "final_lambda": trace.lam,
        "final_mesh_div": last.mesh_div,
        "final_residual_n": last.residual_n,
        "final_seminorm_2h": last.seminorm_2h,
        "final_error_n": last.error_n,
    }
    if noise.sigma > 0:
        summary["optimal_lambda_known_sigma"] = optimal_lambda(noise.sigma, n, rho)
    report = ExperimentReport(
        experiment="ex3",
        config={"n": n, "noise": noise.describe(), "seed": seed, "tol_lambda": config.tol_lam, "max_iter": config.max_iter, "lambda_min": config.lam_min, "m_max": config.m_max},
        columns=["k", "lambda", "mesh_div", "residual_n", "seminorm_2h", "error_n"],
        rows=rows,
        summary=summary,
        wall_clock=time.perf_counter() - t0,
        trace=trace,
    )
    ks = [r[0] for r in rows]
    report.figure = lambda p: plotting.lambda_trace(p, ks, [r[1] for r in rows], [r[5] for r in rows])
    return report


def psi2_norm(x, rtol: float = 1e-12) -> float:
    """Smallest K with ``mean(exp(x^2 / K^2)) <= 2``, by bisection."""
    x2 = np.square(np.asarray(x, dtype=float))
    if not np.any(x2 > 0):
        return 0.0
    ln2 = math.log(2.0)

    def excess(K):
        a = x2 / K**2
        top = a.max()
        return top + math.log(np.mean(np.exp(a - top))) - ln2

    # Jensen lower bound and the max-based upper bound bracket the root
    lo = math.sqrt(x2.mean() / ln2)
    hi = math.sqrt(x2.max() / ln2)
    if excess(lo) <= 0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rtol * hi:
            break
    return hi


def survival_fit(x):
    """Log-survival against z^2 on the upper half of the sample.

    Returns ``(z, survival, slope, intercept, r2)``; slope/intercept/r2 are NaN
    when the upper half has no spread.
    """
    z = np.sort(np.asarray(x, dtype=float))
    M = len(z)
    surv = (M - np.arange(M)) / M  # P(X >= z_(i))
    upper = np.arange(M) >= M // 2
    zz = z[upper] ** 2
    ls = np.log(surv[upper])
    if np.ptp(zz) == 0.0:
        return z, surv, float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(zz, ls, 1)
    pred = intercept + slope * zz
    ss_res = float(np.sum((ls - pred) ** 2))
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return z, surv, float(slope), float(intercept), float(r2)


def run_tail_study(
    n: int = 400,
    noise: NoiseModel = NoiseModel("gaussian", 1.0),
    lam: float | None = None,
    replicates: int = 200,
    seed: int = 0,
    rho: float = RHO_U0,
    m_max: int = 200,
    truth=test_function_u0,
) -> ExperimentReport:
    """Empirical tail of ``||u0 - u_h||_n`` over independent noise draws.

    ``lam`` defaults to the optimal rule with the model's sigma (sigma = 1 is
    used when the model is noiseless).
    """
    _check_n(n)
    t0 = time.perf_counter()
    if lam is None:
        lam = optimal_lambda(noise.sigma if noise.sigma > 0 else 1.0, n, rho)
    m = mesh_divisions_for_lambda(lam, m_max)
    base = generate_samples(n, noise=NoiseModel("none"), seed=seed, truth=truth)
    smoother = DiscreteSmoother(MorleySpace(build_uniform_mesh(m)), base)

    def one(r):
        y = base.truth + noise.sample(make_rng(seed, r), n)
        fit = smoother.solve(lam, y=y)
        return empirical_norm(fit.fitted - base.truth)

    errs = np.array(_map(one, range(replicates)))
    z, surv, slope, intercept, r2 = survival_fit(errs)
    summary = {
        "lambda": lam,
        "mesh_div": m,
        "mean_error_n": float(errs.mean()),
        "std_error_n": float(errs.std()),
        "psi2": psi2_norm(errs),
        "slope": slope,
        "intercept": intercept,
        "r2": r2,
        "degenerate": bool(np.ptp(errs) == 0.0),
    }
    report = ExperimentReport(
        experiment="tail",
        config={"n": n, "noise": noise.describe(), "seed": seed, "replicates": replicates, "lambda": lam, "m_max": m_max},
        columns=["replicate", "error_n"],
        rows=[(i, float(e)) for i, e in enumerate(errs)],
        summary=summary,
        wall_clock=time.perf_counter() - t0,
        tables={"survival": (["z", "survival"], [(float(a), float(b)) for a, b in zip(z, surv)])},
    )
    if not math.isnan(slope):
        report.figure = lambda p: plotting.survival(p, z, surv, slope, intercept)
    return report


def run_interpolation_rates(meshes=RATE_MESHES, n: int = 2500, u=test_function_u0) -> ExperimentReport:
    """Errors of the canonical interpolant over a mesh sequence."""
    t0 = time.perf_counter()
    samples = generate_samples(n, truth=u)
    rows = []
    for m in meshes:
        mesh = build_uniform_mesh(m)
        f = interpolate(u, MorleySpace(mesh))
        e = interpolation_errors(f, u)
        hat = empirical_norm(f.hat_eval(samples.points) - samples.truth)
        jump = edge_mismatch(f, points_per_edge=3)["value"]
        rows.append((m, mesh.h, e["l2"], e["h1"], e["h2"], hat, jump, f.h2_seminorm()))
    h = np.array([r[1] for r in rows])
    cols = ["m_div", "h", "l2", "h1", "h2", "hat_n", "edge_jump", "seminorm"]
    summary = {}
    for i, name in enumerate(cols[2:7], start=2):
        summary["order_" + name] = observed_order(h, [r[i] for r in rows])
    report = ExperimentReport(
        experiment="rates",
        config={"meshes": ";".join(map(str, meshes)), "n": n},
        columns=cols,
        rows=rows,
        summary=summary,
        wall_clock=time.perf_counter() - t0,
    )
    report.figure = lambda p: plotting.rate_table(p, h, {c: [r[i] for r in rows] for i, c in enumerate(cols) if c in ("l2", "h1", "h2", "hat_n", "edge_jump")})
    return report


def run_enrichment_rates(meshes=RATE_MESHES, n: int = 2500, u=test_function_u0) -> ExperimentReport:
    """Distances between I_h u and its C1 enrichment over a mesh sequence."""
    t0 = time.perf_counter()
    samples = generate_samples(n, truth=u)
    rows = []
    c1 = 0.0
    stab = 0.0
    for m in meshes:
        mesh = build_uniform_mesh(m)
        v = interpolate(u, MorleySpace(mesh))
        w = enrich(v, ArgyrisSpace(mesh))
        semi = v.h2_seminorm()
        d = [broken_distance(v, w, k) for k in range(3)]
        rows.append((m, mesh.h, d[0], d[1], d[2], hat_distance_n(v, w, samples), semi))
        mm = edge_mismatch(w)
        c1 = max(c1, *(mm[k] / max(mm[k + "_scale"], 1e-300) for k in ("value", "dx", "dy")))
        stab = max(stab, w.h2_seminorm() / semi)
    h = np.array([r[1] for r in rows])
    semi = np.array([r[6] for r in rows])
    cols = ["m_div", "h", "dist_m0", "dist_m1", "dist_m2", "hat_dist", "seminorm"]
    summary = {}
    for i, name in enumerate(cols[2:6], start=2):
        summary["order_" + name] = observed_order(h, np.array([r[i] for r in rows]) / semi)
    summary["c1_mismatch_rel"] = c1
    summary["stability_ratio"] = stab
    report = ExperimentReport(
        experiment="enrich-rates",
        config={"meshes": ";".join(map(str, meshes)), "n": n},
        columns=cols,
        rows=rows,
        summary=summary,
        wall_clock=time.perf_counter() - t0,
    )
    report.figure = lambda p: plotting.rate_table(p, h, {c: [r[i] / r[6] for r in rows] for i, c in enumerate(cols) if c.startswith(("dist", "hat"))})
    return report


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_report(report: ExperimentReport, outdir) -> list:
    """Write ``<id>.csv``, extra tables, ``<id>_summary.csv``, config echo, timing and figure."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.experiment
    written = []
    path = out / f"{stem}.csv"
    _write_table(path, report.columns, report.rows)
    written.append(path)
    for name, (cols, rows) in report.tables.items():
        path = out / f"{stem}_{name}.csv"
        _write_table(path, cols, rows)
        written.append(path)
    if report.trace is not None:
        path = out / f"{stem}_trace.csv"
        write_trace_csv(report.trace, path)
        written.append(path)
    path = out / f"{stem}_summary.csv"
    _write_table(path, ["key", "value"], list(report.summary.items()))
    written.append(path)
    path = out / f"{stem}_config.txt"
    path.write_text("".join(f"{k} = {fmt(v)}\n" for k, v in report.config.items()))
    written.append(path)
    (out / f"{stem}_timing.txt").write_text(f"wall_clock_s = {report.wall_clock:.3f}\n")
    if report.figure is not None:
        path = out / f"{stem}.svg"
        report.figure(path)
        if path.exists():
            written.append(path)
    return written
