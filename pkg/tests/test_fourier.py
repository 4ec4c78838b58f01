import csv
import json

import numpy as np
import pytest
from scipy import integrate

from rqnn.circuit import CircuitParams
from rqnn.errors import AmplitudeOutOfRange, InvalidArgument, SamplingFailure, UnsupportedTarget
from rqnn.fourier import (CircuitFunction, approximation_constants, error_joint, error_l2, error_sup,
                          fit_amplitudes, loglog_slope, rate_sweep, sample_theta, sample_theta_bounded,
                          sup_grid, uniform_points, weight_norm_bound)
from rqnn.targets import Gaussian, ShiftedGaussian


class _Lin:
    dim = 1

    def __init__(self, c=1.0, k=0.0):
        self.c, self.k = c, k

    def evaluate(self, U):
        return self.c * U[:, 0] + self.k

    def grad(self, U):
        return np.full((U.shape[0], 1), self.c)


def test_centered_gaussian_draws_are_all_real_positive():
    p = sample_theta(Gaussian(1.0, 1.0, 2), 64, 1.0, seed=0)
    assert np.all(p.b == 0) and np.all(p.gamma == 0)    # W = R = ||fhat||_1
    np.testing.assert_allclose(p.R * np.cos(p.gamma), 1.0)


def test_same_seed_same_params():
    t = ShiftedGaussian(0.7, 1.2, [0.3, -0.2])
    p1, p2 = sample_theta(t, 32, 1.0, 5), sample_theta(t, 32, 1.0, 5)
    for name in ("a", "b", "gamma"):
        np.testing.assert_array_equal(getattr(p1, name), getattr(p2, name))


@pytest.mark.parametrize("target", [Gaussian(0.8, 1.0, 2), ShiftedGaussian(0.7, 1.2, [0.3, -0.2])],
                         ids=["gaussian", "shifted"])
def test_single_unit_estimator_is_unbiased(target):
    # 10^4 single-unit draws are exactly the units of one n = 10^4 draw
    p = sample_theta(target, 10_000, target.mass, seed=3)
    for u in ([0.1, 0.4], [-0.7, 0.2]):
        vals = p.R * np.cos(p.gamma) * np.cos(p.a @ np.array(u) + p.b)
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean() - target.evaluate(np.array([u]))[0]) <= 4 * se


def test_shifted_target_uses_both_branches():
    t = ShiftedGaussian(0.7, 1.2, [0.3, -0.2])
    p = sample_theta(t, 5000, t.mass, 1)
    share = np.mean(p.b == 0)
    assert share == pytest.approx(t.p_real, abs=0.03)
    assert 0 < share < 1


def test_sampler_errors():
    t = Gaussian(1.0, 1.0, 1)
    with pytest.raises(InvalidArgument):
        sample_theta(t, 4, 0.5)
    with pytest.raises(InvalidArgument):
        sample_theta(t, 0, 1.0)

    class NoSampler:
        mass = 1.0
    with pytest.raises(UnsupportedTarget):
        sample_theta(NoSampler(), 4, 1.0)


def test_bounded_sampler_respects_bound_and_matches_plain_draw():
    t = Gaussian(1.0, 1.0, 2)
    res = sample_theta_bounded(t, 16, 2, 1.0, seed=9)
    assert np.all(np.linalg.norm(res.params.a, axis=1) <= res.bound)
    assert res.bound == pytest.approx(2 * np.pi * np.sqrt(3 * 16 * t.moment(2) / t.mass))
    if res.attempts == 1:
        np.testing.assert_array_equal(res.params.a, sample_theta(t, 16, 1.0, 9).a)


def test_bounded_sampler_reports_failure():
    class Tight(Gaussian):
        def moment(self, q):
            return 1e-12   # makes the admissible radius far smaller than typical draws

    t = Tight(1.0, 1.0, 2)
    with pytest.raises(SamplingFailure, match="quantiles"):
        sample_theta_bounded(t, 8, 2, 1.0, seed=0, max_attempts=3)
    with pytest.raises(InvalidArgument):
        sample_theta_bounded(t, 4, 1, 1.0)


def test_error_metrics_analytic_cases():
    box = (np.array([0.0]), np.array([1.0]))
    f = _Lin()
    assert error_l2(f, f, box) == 0.0
    assert error_l2(_Lin(1, 0.3), f, box) == pytest.approx(0.09)
    assert error_l2(f, _Lin(0), box, n_points=200_000, seed=1) == pytest.approx(1 / 3, abs=3e-3)
    assert error_joint(_Lin(2, 0.1), f, box) == pytest.approx(0.01 + 1.0 + np.mean(
        uniform_points(box, 4096, 0)[:, 0] ** 2) + 0.2 * np.mean(uniform_points(box, 4096, 0)[:, 0]), rel=1e-12)
    grid = sup_grid(box)
    assert grid.shape == (257, 1)
    assert error_sup(_Lin(1, 0.3), f, grid) == pytest.approx(0.3)
    assert error_sup(_Lin(3), f, grid, derivatives=True) == pytest.approx(2 + 2)
    with pytest.raises(InvalidArgument):
        error_l2(f, f, (np.array([1.0]), np.array([1.0])))


def test_sup_grid_switches_to_sobol():
    g = sup_grid((np.zeros(3), np.ones(3)), sobol_points=1024)
    assert g.shape == (1024, 3) and g.min() >= 0 and g.max() <= 1
    assert sup_grid((np.zeros(2), np.ones(2))).shape == (257 * 257, 2)


def test_unit_gaussian_constant_by_quadrature():
    t = Gaussian(1.0, 1.0, 2)
    coord = integrate.dblquad(lambda y, x: x * x * np.exp(-np.pi * (x * x + y * y)), -8, 8, -8, 8)[0]
    C = 1.0 + 4 * np.pi ** 2 * 2 * coord
    const = approximation_constants(t, M=1.0)
    assert const.C == pytest.approx(C, rel=1e-8)
    assert const.C_bar == pytest.approx(3 * C)


def test_uniform_constant_formula():
    t = Gaussian(1.0, 1.0, 1)
    s2 = 1 / (2 * np.pi)
    M, D = 2.0, 1
    expect = (2 * (np.pi + 1) + (8 * np.pi * M + 4 * np.pi ** 2) * np.sqrt(D * s2)
              + 16 * M * np.pi ** 2 * D * np.sqrt(3 * s2 ** 2))
    assert approximation_constants(t, M).C_inf == pytest.approx(expect)


def test_rate_sweep_halves_error_when_n_doubles(tmp_path):
    t = Gaussian(1.0, 1.0, 2)
    rep = rate_sweep(t, [16, 32, 64], 30, 1.0, seed=4, n_points=1024, sup_per_axis=33)
    assert len(rep.mean_sq_l2_error) == len(rep.mean_joint_error) == len(rep.sup_error) == 3
    for lo, hi in zip(rep.mean_joint_error, rep.mean_joint_error[1:]):
        assert hi / lo == pytest.approx(0.5, rel=0.3)
    for e, n in zip(rep.mean_joint_error, rep.n_values):
        assert e <= 2 * rep.constants.C / n
    path = tmp_path / "rate.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    meta = json.loads(lines[0][2:])
    assert meta["constants"]["C"] == rep.constants.C
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["n", "trial", "sq_l2", "joint", "sup"] and len(rows) == 1 + 90
    with pytest.raises(InvalidArgument):
        rate_sweep(t, [32, 16], 2, 1.0, 0)


def test_rate_sweep_workers_do_not_change_results():
    t = Gaussian(1.0, 1.0, 1)
    a = rate_sweep(t, [4, 8], 3, 1.0, 2, n_points=256, sup_per_axis=17)
    b = rate_sweep(t, [4, 8], 3, 1.0, 2, n_points=256, sup_per_axis=17, workers=2)
    assert a.rows == b.rows


def test_loglog_slope():
    n = np.array([1, 2, 4, 8])
    assert loglog_slope(n, 3.0 / n) == pytest.approx(-1.0)


def test_fit_recovers_existing_circuit():
    rng = np.random.default_rng(0)
    n = 20
    true = CircuitParams(rng.normal(size=(n, 2)), rng.uniform(0, 6, n), rng.uniform(0, np.pi, n), 1.5)
    U = rng.uniform(-1, 1, (400, 2))
    y = CircuitFunction(true).evaluate(U)
    fit = fit_amplitudes((true.a, true.b), U, y, R=1.5, ridge=1e-10)
    assert fit.rmse <= 1e-8
    # near-collinear features: amplitudes are only loosely identified
    np.testing.assert_allclose(fit.params.R * np.cos(fit.params.gamma), true.R * np.cos(true.gamma), atol=1e-2)


def test_fit_constant_feature():
    U = np.linspace(-1, 1, 11)[:, None]
    fit = fit_amplitudes((np.zeros((1, 1)), np.zeros(1)), U, np.full(11, 0.3), ridge=0)
    assert fit.rmse < 1e-15
    assert fit.params.R * np.cos(fit.params.gamma[0]) == pytest.approx(0.3)


def test_fit_clamped_identity():
    rng = np.random.default_rng(1)
    n = 512
    A = 2.0 * rng.standard_normal((n, 1))
    b = 2 * np.pi * rng.random(n)
    U = np.linspace(-1, 1, 2001)[:, None]
    fit = fit_amplitudes((A, b), U, np.clip(U[:, 0], -1, 1))
    assert fit.rmse <= 1e-2


def test_fit_amplitude_overflow_and_validation():
    U = np.linspace(-1, 1, 5)[:, None]
    with pytest.raises(AmplitudeOutOfRange):
        fit_amplitudes((np.zeros((1, 1)), np.zeros(1)), U, np.full(5, 3.0), R=1.0, ridge=0)
    with pytest.raises(InvalidArgument):
        fit_amplitudes((np.zeros((1, 1)), np.zeros(1)), U, np.zeros(5), ridge=-1)
    with pytest.raises(InvalidArgument):
        fit_amplitudes((np.zeros((1, 1)), np.zeros(1)), U, np.zeros(4))


def test_bound_formula_values():
    t = Gaussian(1.0, 1.0, 1)
    assert weight_norm_bound(t, 10, 2) == pytest.approx(2 * np.pi * np.sqrt(30 * t.moment(2)))
