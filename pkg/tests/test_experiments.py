import math

import numpy as np
import pytest

from morleytps.errors import InvalidArgument
from morleytps.harness import experiments as ex
from morleytps.harness.data import NoiseModel, affine_function
from morleytps.smoother import optimal_lambda


def test_psi2_definition():
    x = np.random.default_rng(0).normal(size=500)
    K = ex.psi2_norm(x)
    assert np.mean(np.exp(x**2 / K**2)) == pytest.approx(2.0, rel=1e-8)
    assert np.mean(np.exp(x**2 / (0.99 * K) ** 2)) > 2.0
    assert ex.psi2_norm(np.full(10, 3.0)) == pytest.approx(3.0 / math.sqrt(math.log(2)), rel=1e-12)
    assert ex.psi2_norm(np.zeros(5)) == 0.0
    assert ex.psi2_norm(2 * x) == pytest.approx(2 * K, rel=1e-10)


def test_survival_fit_gaussian_tail():
    x = np.abs(np.random.default_rng(1).normal(size=2000))
    z, s, slope, _, r2 = ex.survival_fit(x)
    assert np.all(np.diff(z) >= 0) and s[0] == 1.0 and s[-1] == 1 / 2000
    assert r2 >= 0.9 and slope < 0
    z, s, slope, _, r2 = ex.survival_fit(np.ones(10))
    assert math.isnan(slope) and math.isnan(r2)


def test_observed_order():
    h = np.array([0.1, 0.05, 0.025])
    assert ex.observed_order(h, 3 * h**2) == pytest.approx(2.0)


def test_sweep_zero_noise():
    # affine truth: zero error for every lambda, no tradeoff
    r = ex.run_lambda_sweep(n=400, noise=NoiseModel("none"), truth=affine_function(1, 2, 3))
    assert len(r.rows) == 11
    assert r.column("error_n").max() <= 1e-12
    # smooth truth without noise: error keeps falling as lambda -> 0
    r = ex.run_lambda_sweep(n=900, noise=NoiseModel("none"), lambdas=[10.0**-k for k in range(0, 9, 2)])
    e = r.column("error_n")
    assert np.all(np.diff(e) < 0)
    assert r.summary["best_lambda"] == 1e-8


def test_sweep_seeded_example():
    r = ex.run_lambda_sweep(n=2500, noise=NoiseModel("gaussian", 1.0), seed=9)
    assert r.summary["best_lambda"] in (1e-7, 1e-6, 1e-5)
    assert r.summary["best_error_n"] <= 0.5 * r.summary["error_n_at_1e-2"]
    assert r.column("mesh_div").tolist() == [1, 2, 3, 6, 10, 18, 32, 56, 100, 178, 200]
    assert r.columns == ["lambda", "mesh_div", "error_n", "residual_n", "seminorm_2h", "cg_iters"]


def test_rate_study_small_and_degenerate():
    r = ex.run_rate_study(ns=[400, 1600, 6400], replicates=3, seed=2)
    assert not r.summary["insufficient_spread"]
    assert r.summary["slope"] > 0 and r.summary["pearson_r"] > 0.9
    assert r.column("replicates").tolist() == [3, 3, 3]
    d = ex.run_rate_study(ns=[400, 400], replicates=2)
    assert d.summary["insufficient_spread"] is True
    assert math.isnan(d.summary["slope"])
    d = ex.run_rate_study(ns=[400], replicates=1)
    assert d.summary["insufficient_spread"] is True


def test_rate_study_replicates_use_known_sigma():
    r = ex.run_rate_study(ns=[400], replicates=2, noise=NoiseModel("combined", 1.0, 10.0))
    assert r.rows[0][1] == optimal_lambda(math.sqrt(101), 400, 200.0)


def test_self_consistent_noiseless_affine():
    r = ex.run_self_consistent(n=400, noise=NoiseModel("none"), truth=affine_function(0, 1, 1))
    assert r.summary["converged"] is True
    assert r.summary["iterations"] == 1
    assert r.summary["final_lambda"] == 1e-14
    assert "optimal_lambda_known_sigma" not in r.summary


def test_tail_zero_noise_is_deterministic():
    r = ex.run_tail_study(n=400, noise=NoiseModel("none"), replicates=20)
    x = r.column("error_n")
    assert np.ptp(x) == 0.0 and r.summary["degenerate"]
    assert r.summary["psi2"] == pytest.approx(x[0] / math.sqrt(math.log(2)), rel=1e-12)
    cols, rows = r.tables["survival"]
    assert cols == ["z", "survival"]
    assert len({z for z, _ in rows}) == 1
    assert r.figure is None


def test_tail_psi2_grows_with_sigma():
    lam = 1e-5
    psi = [ex.run_tail_study(n=400, noise=NoiseModel("gaussian", s), lam=lam, replicates=40).summary["psi2"] for s in (0.5, 1, 2)]
    assert psi[0] < psi[1] < psi[2]


def test_interpolation_rate_table():
    r = ex.run_interpolation_rates(meshes=(8, 16, 32))
    assert r.columns == ["m_div", "h", "l2", "h1", "h2", "hat_n", "edge_jump", "seminorm"]
    assert r.summary["order_edge_jump"] >= 1.5
    assert r.summary["order_l2"] >= 1.8 and r.summary["order_h1"] >= 0.8


def test_enrichment_rate_table():
    r = ex.run_enrichment_rates(meshes=(8, 16))
    assert r.columns == ["m_div", "h", "dist_m0", "dist_m1", "dist_m2", "hat_dist", "seminorm"]
    assert r.summary["c1_mismatch_rel"] <= 1e-8
    assert r.summary["stability_ratio"] <= 10


def test_write_report_is_deterministic(tmp_path, monkeypatch):
    outs = []
    for threads, sub in (("1", "a"), ("2", "b")):
        monkeypatch.setenv("TPS_THREADS", threads)
        r = ex.run_tail_study(n=100, replicates=12, seed=4)
        ex.write_report(r, tmp_path / sub)
        outs.append(tmp_path / sub)
    for name in ("tail.csv", "tail_survival.csv", "tail_summary.csv", "tail_config.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "tail.svg").exists()
    cfg = (outs[0] / "tail_config.txt").read_text().splitlines()
    assert all(" = " in line for line in cfg) and "replicates = 12" in cfg
    assert (outs[0] / "tail.csv").read_text().splitlines()[0] == "replicate,error_n"


def test_threads_env_validation(monkeypatch):
    monkeypatch.setenv("TPS_THREADS", "many")
    with pytest.raises(InvalidArgument):
        ex.workers()
    monkeypatch.setenv("TPS_THREADS", "3")
    assert ex.workers() == 3


def test_sample_cap():
    with pytest.raises(InvalidArgument):
        ex.run_lambda_sweep(n=90_000)
    with pytest.raises(InvalidArgument):
        ex.run_rate_study(ns=[2500, 90_000])


def test_fmt_shortest_round_trip():
    assert ex.fmt(0.1) == "0.1"
    assert ex.fmt(np.float64(1e-6)) == "1e-06"
    assert ex.fmt(np.int64(3)) == "3"
    assert ex.fmt(True) == "true"
    x = 0.1 + 0.2
    assert float(ex.fmt(x)) == x
