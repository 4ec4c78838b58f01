import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rqnn.circuit import CircuitParams
from rqnn.errors import InvalidArgument, NumericWarning
from rqnn.qnn import (ThetaBundle, eval_component, eval_state_map, gradient, jacobian_x, jacobian_x_batch,
                      lipschitz_estimate, max_spectral_norm, region_points, spectral_norm, state_map_batch)


def _circ(rng, n, dim, R=1.0):
    return CircuitParams(rng.normal(0, 1.5, (n, dim)), rng.uniform(0, 2 * np.pi, n),
                         rng.uniform(0, 2 * np.pi, n), R)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 8), dim=st.integers(2, 6), seed=st.integers(0, 2**31 - 1))
def test_three_evaluation_paths_agree(n, dim, seed):
    rng = np.random.default_rng(seed)
    c = _circ(rng, n, dim, R=rng.uniform(0.5, 3))
    x, z = rng.uniform(-1, 1, dim - 1), rng.uniform(-1, 1, 1)
    vals = [eval_component(c, x, z, p) for p in ("closed_form", "probs", "circuit")]
    assert max(vals) - min(vals) <= 1e-10
    assert abs(vals[0]) <= c.R + 1e-12


def test_known_value_single_unit():
    # n = 1: output R cos(gamma) cos(b + a.u)
    c = CircuitParams([[1.0, 2.0]], [0.3], [0.4], 2.0)
    expect = 2.0 * np.cos(0.4) * np.cos(0.3 + 1.0 * 0.5 - 2.0 * 0.25)
    assert eval_component(c, [0.5], [-0.25]) == pytest.approx(expect, abs=1e-15)
    with pytest.raises(InvalidArgument):
        eval_component(c, [0.5], [-0.25], "tensor")


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(20):
        c = _circ(rng, 12, 4)
        u = rng.uniform(-1, 1, 4)
        g = gradient(c, u[:3], u[3:])
        fd = [(eval_component(c, (u + h * e)[:3], (u + h * e)[3:]) - eval_component(c, (u - h * e)[:3], (u - h * e)[3:])) / (2 * h)
              for e in np.eye(4)]
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


def test_bundle_validation_and_batch():
    rng = np.random.default_rng(4)
    circs = [_circ(rng, 5, 3) for _ in range(2)]
    th = ThetaBundle.from_circuits(circs, 1)
    assert th.N == 2 and th.n == 5 and th.A.shape == (2, 5, 3)
    X, Z = rng.uniform(-1, 1, (6, 2)), rng.uniform(-1, 1, (6, 1))
    batch = state_map_batch(th, X, Z)
    for k in range(6):
        np.testing.assert_allclose(batch[k], eval_state_map(th, X[k], Z[k]), atol=1e-15)
        np.testing.assert_allclose(jacobian_x_batch(th, X[k:k + 1], Z[k:k + 1])[0], jacobian_x(th, X[k], Z[k]))
    with pytest.raises(InvalidArgument):
        ThetaBundle.from_circuits([circs[0], _circ(rng, 4, 3)], 1)
    with pytest.raises(InvalidArgument):
        ThetaBundle.from_circuits([circs[0], circs[1].with_R(2.0)], 1)
    with pytest.raises(InvalidArgument):
        eval_state_map(th, [0.1], [0.2])


def test_jacobian_rows_are_component_gradients():
    rng = np.random.default_rng(5)
    circs = [_circ(rng, 4, 4) for _ in range(3)]
    th = ThetaBundle.from_circuits(circs, 1)
    x, z = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 1)
    J = jacobian_x(th, x, z)
    for j, c in enumerate(circs):
        np.testing.assert_allclose(J[j], gradient(c, x, z)[:3])


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(6)
    for _ in range(10):
        J = rng.normal(size=(4, 4))
        assert spectral_norm(J, max_iter=5000) == pytest.approx(np.linalg.svd(J, compute_uv=False)[0], rel=1e-6)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_spectral_norm_warns_without_convergence():
    J = np.diag([1.0, 0.999999])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        spectral_norm(J, max_iter=2, tol=0)
    assert any(issubclass(w.category, NumericWarning) for w in rec)


def test_region_points_grid_and_cap():
    pts = region_points([0, 0], [1, 1], per_axis=5)
    assert pts.shape == (25, 2)
    pts = region_points([0] * 4, [1] * 4, per_axis=33, cap=1000)
    assert pts.shape == (1000, 4) and pts.min() >= 0 and pts.max() <= 1


def test_lipschitz_estimate_for_scaled_single_unit():
    # F = c cos(a x), |dF/dx| <= |c a|, attained on the grid at a x = pi/2
    c = CircuitParams([[np.pi, 0.0]], [0.0], [0.0], 0.4)
    th = ThetaBundle.from_circuits([c], 1)
    assert lipschitz_estimate(th, -1, 1, -1, 1, per_axis=65) == pytest.approx(0.4 * np.pi, rel=1e-12)
    assert max_spectral_norm(np.array([[[-2.0]], [[1.0]]])) == 2.0
