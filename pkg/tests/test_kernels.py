"""The numba and numpy implementations of every kernel must agree."""

import numpy as np
import pytest

from rqnn import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    n, D, m = 17, 4, 9
    return (rng.normal(size=(n, D)), rng.uniform(0, 6, n), rng.normal(size=n) / n,
            rng.uniform(0, 2 * np.pi, n), rng.uniform(-1, 1, (m, D)))


def test_feature_values(data):
    A, b, coef, _, U = data
    np.testing.assert_allclose(K._nb_feature_values(A, b, coef, U), K._np_feature_values(A, b, coef, U),
                               rtol=0, atol=1e-14)


def test_feature_grads(data):
    A, b, coef, _, U = data
    np.testing.assert_allclose(K._nb_feature_grads(A, b, coef, U), K._np_feature_grads(A, b, coef, U),
                               rtol=0, atol=1e-13)


def test_class_probs(data):
    A, b, _, gamma, U = data
    P = K._nb_class_probs(A, b, gamma, U)
    np.testing.assert_allclose(P, K._np_class_probs(A, b, gamma, U), rtol=0, atol=1e-14)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-14)


@pytest.mark.parametrize("use_pre", [False, True])
def test_run_states(use_pre):
    rng = np.random.default_rng(1)
    N, d, n, S, T = 3, 2, 8, 4, 15
    A = rng.normal(size=(N, n, N + d))
    b = rng.uniform(0, 6, (N, n))
    coef = rng.normal(size=(N, n)) / n
    P = rng.normal(size=(N, N, N))
    Z = rng.uniform(-1, 1, (S, T, d))
    x0 = rng.uniform(-1, 1, (S, N))
    np.testing.assert_allclose(K._nb_run_states(A, b, coef, P, use_pre, Z, x0),
                               K._np_run_states(A, b, coef, P, use_pre, Z, x0), rtol=0, atol=1e-13)


def test_backend_flag_is_consistent():
    assert K.BACKEND in ("numba", "numpy")
    expect = K._nb_feature_values if K.BACKEND == "numba" else K._np_feature_values
    assert K.feature_values is expect
