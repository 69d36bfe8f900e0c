import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morleytps.errors import InvalidArgument
from morleytps.harness.data import NoiseModel, affine_function, generate_samples
from morleytps.smoother import (
    SmootherConfig,
    fit_auto,
    initial_lambda,
    lambda_exponent,
    mesh_divisions_for_lambda,
    optimal_lambda,
    read_trace_csv,
    self_consistent_lambda,
    update_lambda,
    write_trace_csv,
)


def test_exponent_is_computed_from_d():
    assert lambda_exponent(2) == pytest.approx(4 / 3)
    assert lambda_exponent(3) == pytest.approx(1 / (0.5 + 3 / 8))


def test_optimal_lambda_examples():
    assert optimal_lambda(1.0, 2500, 200.0) == pytest.approx(4.64e-6, rel=1e-3)
    assert optimal_lambda(0.0, 2500, 200.0) == 0.0
    # the reported optimum 1.03e-5 is not what the unit-constant rule gives (1.58e-5)
    lam = optimal_lambda(math.sqrt(101), 40_000, 200.0)
    assert lam == pytest.approx(1.5847e-5, rel=1e-3)
    assert 1.03e-5 / 2 <= lam <= 1.03e-5 * 2


@pytest.mark.parametrize("args", [(-1, 10, 1), (1, 0, 1), (0, 10, 0), (1, 10, -2)])
def test_optimal_lambda_invalid(args):
    with pytest.raises(InvalidArgument):
        optimal_lambda(*args)


def test_mesh_divisions_examples():
    assert mesh_divisions_for_lambda(1e-6) == 32
    assert mesh_divisions_for_lambda((1 / 32) ** 4) == 32
    assert mesh_divisions_for_lambda(1.0) == 1
    assert mesh_divisions_for_lambda(10.0) == 1
    assert mesh_divisions_for_lambda(1e-12, m_max=200) == 200
    with pytest.raises(InvalidArgument):
        mesh_divisions_for_lambda(0.0)


@given(st.integers(1, 500))
def test_mesh_divisions_inverts_h4(m):
    assert mesh_divisions_for_lambda(float(m) ** -4) == m


def test_initial_lambda():
    assert initial_lambda(2500) == pytest.approx(2500 ** (-2 / 3))


def test_update_lambda_matches_optimal_rule():
    n = 900
    assert update_lambda(2.0, 50.0, n) == pytest.approx(optimal_lambda(2.0, n, 50.0), rel=1e-14)
    assert update_lambda(0.0, 5.0, n) == 0.0


def test_config_validation():
    for kw in ({"lam_min": 0}, {"tol_lam": 1.5}, {"max_iter": 0}, {"d": 3}):
        with pytest.raises(InvalidArgument):
            SmootherConfig(**kw)


@pytest.fixture(scope="module")
def gaussian_trace():
    return self_consistent_lambda(generate_samples(2500, noise=NoiseModel("gaussian", 1.0), seed=1))


def test_gaussian_example(gaussian_trace):
    t = gaussian_trace
    assert t.converged and len(t.iterations) <= 30
    assert 4.12e-6 / 3 <= t.lam <= 4.12e-6 * 3
    assert 0.9 <= t.fit.residual_n <= 1.1
    assert all(it.lam > 0 for it in t.iterations)
    assert [it.k for it in t.iterations] == list(range(len(t.iterations)))


def test_fixed_point_consistency(gaussian_trace):
    t = gaussian_trace
    last = t.iterations[-1]
    again = update_lambda(t.fit.residual_n, t.fit.seminorm_2h, 2500)
    assert abs(again - last.lam) <= 1e-3 * last.lam
    assert t.fit.mesh_div == last.mesh_div


def test_combined_noise_example():
    samples = generate_samples(40_000, noise=NoiseModel("combined", 1.0, 10.0), seed=1)
    t = self_consistent_lambda(samples)
    assert t.converged and len(t.iterations) <= 30
    assert 2.16e-5 / 3 <= t.lam <= 2.16e-5 * 3
    assert 9.5 <= t.fit.residual_n <= 10.6


@pytest.mark.parametrize("gamma", [1.0, 2.0])
def test_noiseless_affine_hits_lambda_min(gamma):
    u = affine_function(gamma * 1.0, gamma * 2.0, gamma * -0.5)
    t = self_consistent_lambda(generate_samples(400, truth=u))
    assert t.converged
    assert len(t.iterations) == 1
    assert t.lam == SmootherConfig().lam_min
    assert t.iterations[0].residual_n <= 1e-10


def test_fit_auto_delegates():
    samples = generate_samples(400, noise=NoiseModel("gaussian", 0.3), seed=2)
    assert np.array_equal(fit_auto(samples).coefficients, self_consistent_lambda(samples).fit.coefficients)


def test_max_iter_respected():
    samples = generate_samples(400, noise=NoiseModel("gaussian", 1.0), seed=2)
    t = self_consistent_lambda(samples, config=SmootherConfig(max_iter=2, tol_lam=1e-9))
    assert len(t.iterations) == 2 and not t.converged


def test_initial_guess_validation():
    samples = generate_samples(100, noise=NoiseModel("gaussian", 1.0), seed=2)
    with pytest.raises(InvalidArgument):
        self_consistent_lambda(samples, lam0=-1.0)


def test_determinism_and_csv_round_trip(tmp_path):
    samples = generate_samples(900, noise=NoiseModel("gaussian", 1.0), seed=5)
    a = self_consistent_lambda(samples)
    b = self_consistent_lambda(generate_samples(900, noise=NoiseModel("gaussian", 1.0), seed=5))
    assert a.iterations == b.iterations
    assert np.array_equal(a.fit.coefficients, b.fit.coefficients)
    write_trace_csv(a, tmp_path / "a.csv")
    write_trace_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_trace_csv(tmp_path / "a.csv")
    assert [(i.k, i.lam, i.mesh_div, i.residual_n, i.seminorm_2h) for i in back] == [
        (i.k, i.lam, i.mesh_div, i.residual_n, i.seminorm_2h) for i in a.iterations
    ]
