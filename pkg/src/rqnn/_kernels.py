"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every kernel exists twice: ``_np_<name>`` (vectorised numpy) and
``_nb_<name>`` (numba ``@njit`` loops). The public name is bound to the numba
version unless numba is missing or ``RQNN_NO_NUMBA`` is set to a truthy value
before import.

Shapes used throughout::

    A     (n, D)   frequency vectors of the n cosine units, D = N + d
    b     (n,)     phases
    coef  (n,)     output weights, ``R * cos(gamma) / n``
    U     (m, D)   evaluation points (x, z) stacked row-wise
"""

import os

import numpy as np

_FLAG = os.environ.get("RQNN_NO_NUMBA", "").strip().lower()
_WANT_NUMBA = _FLAG in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = "numba" if (HAVE_NUMBA and _WANT_NUMBA) else "numpy"


# ---------------------------------------------------------------- numpy ---

def _np_feature_values(A, b, coef, U):
    return np.cos(U @ A.T + b) @ coef


def _np_feature_grads(A, b, coef, U):
    s = np.sin(U @ A.T + b)
    return -(s * coef) @ A


def _np_class_probs(A, b, gamma, U):
    n = A.shape[0]
    half = 0.5 * (U @ A.T + b)
    c2 = np.cos(half) ** 2
    s2 = 1.0 - c2
    cg = np.cos(0.5 * gamma) ** 2
    sg = 1.0 - cg
    out = np.empty((U.shape[0], 4))
    out[:, 0] = c2 @ cg
    out[:, 1] = c2 @ sg
    out[:, 2] = s2 @ cg
    out[:, 3] = s2 @ sg
    return out / n


def _rowwise_matvec(M, X):
    # X @ M.T accumulated column by column: every row is rounded identically,
    # which BLAS does not guarantee across rows of one batch
    acc = np.zeros((X.shape[0], M.shape[0]))
    for l in range(M.shape[1]):
        acc += X[:, l:l + 1] * M[:, l]
    return acc


def _np_run_states(A, b, coef, P, use_pre, Z, x0):
    S, T, _ = Z.shape
    N = A.shape[0]
    out = np.empty((S, T, N))
    x = x0.copy()
    for t in range(T):
        z = Z[:, t, :]
        new = np.empty((S, N))
        for j in range(N):
            xin = _rowwise_matvec(P[j], x) if use_pre else x
            u = np.concatenate((xin, z), axis=1)
            new[:, j] = (np.cos(_rowwise_matvec(A[j], u) + b[j]) * coef[j]).sum(axis=1)
        x = new
        out[:, t, :] = x
    return out


# ---------------------------------------------------------------- numba ---

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, fastmath=False)

    @_jit
    def _nb_feature_values(A, b, coef, U):
        m, D = U.shape
        n = A.shape[0]
        out = np.zeros(m)
        for k in range(m):
            acc = 0.0
            for i in range(n):
                ph = b[i]
                for l in range(D):
                    ph += A[i, l] * U[k, l]
                acc += coef[i] * np.cos(ph)
            out[k] = acc
        return out

    @_jit
    def _nb_feature_grads(A, b, coef, U):
        m, D = U.shape
        n = A.shape[0]
        out = np.zeros((m, D))
        for k in range(m):
            for i in range(n):
                ph = b[i]
                for l in range(D):
                    ph += A[i, l] * U[k, l]
                w = -coef[i] * np.sin(ph)
                for l in range(D):
                    out[k, l] += w * A[i, l]
        return out

    @_jit
    def _nb_class_probs(A, b, gamma, U):
        m, D = U.shape
        n = A.shape[0]
        cg = np.empty(n)
        for i in range(n):
            cg[i] = np.cos(0.5 * gamma[i]) ** 2
        out = np.zeros((m, 4))
        for k in range(m):
            for i in range(n):
                ph = b[i]
                for l in range(D):
                    ph += A[i, l] * U[k, l]
                c2 = np.cos(0.5 * ph) ** 2
                s2 = 1.0 - c2
                out[k, 0] += c2 * cg[i]
                out[k, 1] += c2 * (1.0 - cg[i])
                out[k, 2] += s2 * cg[i]
                out[k, 3] += s2 * (1.0 - cg[i])
        return out / n

    @_jit
    def _nb_run_states(A, b, coef, P, use_pre, Z, x0):
        S, T, d = Z.shape
        N, n, D = A.shape
        out = np.empty((S, T, N))
        u = np.empty(D)
        x = np.empty(N)
        for s in range(S):
            for l in range(N):
                x[l] = x0[s, l]
            for t in range(T):
                for l in range(d):
                    u[N + l] = Z[s, t, l]
                for j in range(N):
                    if use_pre:
                        for r in range(N):
                            acc = 0.0
                            for c in range(N):
                                acc += P[j, r, c] * x[c]
                            u[r] = acc
                    else:
                        for r in range(N):
                            u[r] = x[r]
                    val = 0.0
                    for i in range(n):
                        ph = b[j, i]
                        for l in range(D):
                            ph += A[j, i, l] * u[l]
                        val += coef[j, i] * np.cos(ph)
                    out[s, t, j] = val
                for l in range(N):
                    x[l] = out[s, t, l]
        return out


if BACKEND == "numba":
    feature_values = _nb_feature_values
    feature_grads = _nb_feature_grads
    class_probs = _nb_class_probs
    run_states = _nb_run_states
else:
    feature_values = _np_feature_values
    feature_grads = _np_feature_grads
    class_probs = _np_class_probs
    run_states = _np_run_states
