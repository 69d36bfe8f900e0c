"""Acceptance criteria, one check per criterion at the stated tolerances.

Each check prints a single ``[PASS]``/``[FAIL]`` line (also collected into
the pytest terminal summary).  Run standalone with
``python3 tests/test_acceptance.py`` to print all lines without pytest.
"""
from __future__ import annotations

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla

from morleytps.harness import experiments as ex
from morleytps.harness.data import NoiseModel, affine_function, generate_samples, grid_points, test_function_u0
from morleytps.mesh import build_uniform_mesh
from morleytps.morley import MorleySpace
from morleytps.oracle import fit_dense
from morleytps.smoother import mesh_divisions_for_lambda, optimal_lambda
from morleytps.system import DiscreteSmoother, SampleSet, empirical_norm

RESULTS: list[str] = []
RHO = 200.0


def report(number, title, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail} ({elapsed:.2f} s, budget {budget:g} s)"
    RESULTS.append(line)
    print(line)
    return ok


def within(x, lo, hi):
    return lo <= x <= hi


def c1_affine_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(3):
        a = rng.normal(size=3)
        samples.append(generate_samples(400, truth=affine_function(*a)))
    worst_r = worst_s = 0.0
    for m in (1, 2, 5, 10, 20):
        space = MorleySpace(build_uniform_mesh(m))
        for s in samples:
            ds = DiscreteSmoother(space, s)
            for lam in (1e-8, 1e-6, 1e-4, 1e-2, 1.0):
                fit = ds.solve(lam)
                worst_r = max(worst_r, fit.residual_n)
                worst_s = max(worst_s, fit.seminorm_2h)
    el = time.perf_counter() - t0
    ok = worst_r <= 1e-10 and worst_s <= 1e-10
    return report(1, "affine exactness", ok, f"max residual_n {worst_r:.2e}, max seminorm_2h {worst_s:.2e} (tol 1e-10)", el, 1.0)


def c2_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    pts = rng.uniform(0, 1, (12, 2))
    s = SampleSet(pts, rng.normal(size=12))
    ds = DiscreteSmoother(MorleySpace(build_uniform_mesh(2)), s)
    fit = ds.solve(1e-3)
    direct = sla.solve(ds.matrix(1e-3).toarray(), ds.rhs(s.values))
    rel = np.linalg.norm(fit.coefficients - direct) / np.linalg.norm(direct)
    el = time.perf_counter() - t0
    return report(2, "brute-force equivalence", rel <= 1e-8, f"relative difference {rel:.2e} (tol 1e-8)", el, 1.0)


def c3_interpolation_rates():
    t0 = time.perf_counter()
    r = ex.run_interpolation_rates(meshes=(8, 16, 32, 64))
    el = time.perf_counter() - t0
    o = r.summary
    ok = within(o["order_l2"], 1.8, 2.2) and within(o["order_h1"], 0.8, 1.2) and within(o["order_hat_n"], 1.8, 2.2)
    detail = (
        f"orders L2 {o['order_l2']:.3f} (want [1.8,2.2]), H1 {o['order_h1']:.3f} (want [0.8,1.2]), "
        f"empirical {o['order_hat_n']:.3f} (want [1.8,2.2])"
    )
    return report(3, "interpolation rates", ok, detail, el, 30.0)


def c4_enrichment_rates():
    t0 = time.perf_counter()
    r = ex.run_enrichment_rates(meshes=(8, 16, 32, 64))
    el = time.perf_counter() - t0
    o = r.summary
    ok = (
        abs(o["order_dist_m0"] - 2) <= 0.3
        and abs(o["order_dist_m1"] - 1) <= 0.3
        and o["c1_mismatch_rel"] <= 1e-8
        and abs(o["order_hat_dist"] - 2) <= 0.3
    )
    detail = (
        f"orders m=0 {o['order_dist_m0']:.3f} (want 2+-0.3), m=1 {o['order_dist_m1']:.3f} (want 1+-0.3), "
        f"hat {o['order_hat_dist']:.3f} (want 2+-0.3), C1 mismatch {o['c1_mismatch_rel']:.1e} (tol 1e-8)"
    )
    return report(4, "enrichment rates", ok, detail, el, 120.0)


def c5_oracle_agreement():
    t0 = time.perf_counter()
    pts = grid_points(10, 20)
    u = test_function_u0(pts)[0]
    s = SampleSet(pts, u, u)
    lam = 1e-4
    model = fit_dense(s, lam)
    fit = DiscreteSmoother(MorleySpace(build_uniform_mesh(mesh_divisions_for_lambda(lam))), s).solve(lam)
    gap = empirical_norm(fit.fitted - model(pts))
    bound = 3 * math.sqrt(lam) * math.sqrt(model.seminorm_sq)
    el = time.perf_counter() - t0
    return report(5, "oracle agreement", gap <= bound, f"||u_h - U_n||_n = {gap:.4f} <= {bound:.4f}", el, 10.0)


SEEDS = (1, 2, 3)


def run_c6(out=None):
    reports = []
    for seed in SEEDS:
        r = ex.run_lambda_sweep(n=2500, noise=NoiseModel("gaussian", 1.0), seed=seed)
        r.experiment = f"ex1_seed{seed}"
        reports.append(r)
        if out is not None:
            ex.write_report(r, out)
    return reports


def c6_example_sweep():
    t0 = time.perf_counter()
    best = [r.summary["best_lambda"] for r in run_c6()]
    el = time.perf_counter() - t0
    ok = all(b in (1e-7, 1e-6, 1e-5) for b in best)
    return report(6, "lambda sweep argmin", ok, f"argmin per seed {best} (want in {{1e-7,1e-6,1e-5}})", el, 300.0)


def run_c7(out=None):
    a = ex.run_self_consistent(n=2500, noise=NoiseModel("gaussian", 1.0), seed=1)
    b = ex.run_self_consistent(n=40_000, noise=NoiseModel("combined", 1.0, 10.0), seed=1)
    b.experiment = "ex3_combined"
    if out is not None:
        ex.write_report(a, out)
        ex.write_report(b, out)
    return a, b


def c7_self_consistent():
    t0 = time.perf_counter()
    a, b = run_c7()
    el = time.perf_counter() - t0
    sa, sb = a.summary, b.summary
    ok = (
        sa["converged"]
        and sa["iterations"] <= 30
        and 4.12e-6 / 3 <= sa["final_lambda"] <= 4.12e-6 * 3
        and abs(sa["final_residual_n"] - 0.99) <= 0.05 * 0.99
        and sb["converged"]
        and sb["iterations"] <= 30
        and 2.16e-5 / 3 <= sb["final_lambda"] <= 2.16e-5 * 3
        and abs(sb["final_residual_n"] - 10.07) <= 0.05 * 10.07
    )
    detail = (
        f"gaussian: {sa['iterations']} its, lambda {sa['final_lambda']:.3e}, residual {sa['final_residual_n']:.4f}; "
        f"combined: {sb['iterations']} its, lambda {sb['final_lambda']:.3e}, residual {sb['final_residual_n']:.4f}"
    )
    return report(7, "self-consistent lambda", ok, detail, el, 600.0)


def run_c8(out=None):
    r = ex.run_rate_study(ns=(2500, 10_000, 40_000), noise=NoiseModel("gaussian", 1.0), seed=1, replicates=10, rho=RHO)
    if out is not None:
        ex.write_report(r, out)
    return r


def c8_linearity():
    t0 = time.perf_counter()
    r = run_c8()
    el = time.perf_counter() - t0
    pr = r.summary["pearson_r"]
    return report(8, "error linear in sqrt(lambda)", pr >= 0.98, f"Pearson r {pr:.5f} (want >= 0.98), slope {r.summary['slope']:.2f}", el, 900.0)


def run_c9(out=None):
    lam = optimal_lambda(1.0, 400, RHO)
    reports = []
    for s in (0.5, 1.0, 2.0):
        r = ex.run_tail_study(n=400, noise=NoiseModel("gaussian", s), lam=lam, replicates=200, seed=1, rho=RHO)
        r.experiment = f"tail_sigma{s}"
        reports.append(r)
        if out is not None:
            ex.write_report(r, out)
    return reports


def c9_tail():
    t0 = time.perf_counter()
    reports = run_c9()
    el = time.perf_counter() - t0
    r2 = reports[1].summary["r2"]
    psi = [r.summary["psi2"] for r in reports]
    ok = r2 >= 0.9 and psi[0] < psi[1] < psi[2]
    return report(9, "sub-Gaussian tail", ok, f"R^2 {r2:.4f} at sigma=1 (want >= 0.9), psi2 for sigma 0.5/1/2: " + ", ".join(f"{p:.4f}" for p in psi), el, 600.0)


def c10_determinism():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as d:
        dirs = [Path(d) / "a", Path(d) / "b"]
        for out in dirs:
            run_c6(out)
            run_c7(out)
            run_c8(out)
            run_c9(out)
        names = sorted(p.name for p in dirs[0].glob("*.csv"))
        same = [n for n in names if (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes()]
        ok = len(names) > 0 and len(same) == len(names) and names == sorted(p.name for p in dirs[1].glob("*.csv"))
    el = time.perf_counter() - t0
    return report(10, "determinism", ok, f"{len(same)}/{len(names)} CSV files byte-identical across reruns", el, 1800.0)


CHECKS = [
    c1_affine_exactness,
    c2_brute_force,
    c3_interpolation_rates,
    c4_enrichment_rates,
    c5_oracle_agreement,
    c6_example_sweep,
    c7_self_consistent,
    c8_linearity,
    c9_tail,
    c10_determinism,
]


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__ for c in CHECKS])
def test_criterion(check):
    assert check(), RESULTS[-1]


if __name__ == "__main__":
    results = [check() for check in CHECKS]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
