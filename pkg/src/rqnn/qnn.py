"""QNN state map ``x -> (R - 2R (P1 + P2))_j`` and its derivatives.

Each component is evaluated from the cosine representation
``(1/n) sum_i R cos(gamma^i) cos(b^i + a^i . (x, z))``; the circuit and
probability paths exist for cross-checking.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from .circuit import CircuitParams, _check_point, dense_probs, fast_probs
from .errors import InvalidArgument, NumericWarning

DEBUG = os.environ.get("RQNN_DEBUG", "").strip() not in ("", "0")


def eval_component(circ: CircuitParams, x, z,
                   path: Literal["closed_form", "probs", "circuit"] = "closed_form") -> float:
    """One QNN output.

    ``circuit`` simulates the statevector densely, ``probs`` uses the
    closed-form class probabilities, and ``closed_form`` the cosine sum.
    """
    u = _check_point(circ, x, z)
    if path == "closed_form":
        val = float(_kernels.feature_values(circ.a, circ.b, circ.coef, u[None, :])[0])
    elif path in ("circuit", "probs"):
        p = dense_probs(circ, x, z) if path == "circuit" else fast_probs(circ, x, z)
        val = circ.R - 2.0 * circ.R * (p[1] + p[2])
    else:
        raise InvalidArgument(f"unknown evaluation path {path!r}")
    if DEBUG:
        assert abs(val) <= circ.R * (1 + 1e-12), (val, circ.R)
    return val


def gradient(circ: CircuitParams, x, z) -> np.ndarray:
    """Gradient of :func:`eval_component` with respect to ``(x, z)``."""
    u = _check_point(circ, x, z)
    return _kernels.feature_grads(circ.a, circ.b, circ.coef, u[None, :])[0]


@dataclass(frozen=True, eq=False)
class ThetaBundle:
    """``N`` circuits sharing ``n`` and ``R``; circuit ``j`` drives state component ``j``."""

    circuits: tuple
    N: int
    d: int

    def __post_init__(self):
        circuits = tuple(self.circuits)
        if len(circuits) != self.N:
            raise InvalidArgument(f"expected {self.N} circuits, got {len(circuits)}")
        n, R = circuits[0].n, circuits[0].R
        for c in circuits:
            if c.n != n or c.R != R or c.dim != self.N + self.d:
                raise InvalidArgument("all circuits must share n, R and weight length N + d")
        object.__setattr__(self, "circuits", circuits)

    @classmethod
    def from_circuits(cls, circuits: Sequence[CircuitParams], d: int) -> "ThetaBundle":
        return cls(tuple(circuits), len(circuits), d)

    @property
    def n(self) -> int:
        return self.circuits[0].n

    @property
    def R(self) -> float:
        return self.circuits[0].R

    @cached_property
    def A(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([c.a for c in self.circuits]))

    @cached_property
    def b(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([c.b for c in self.circuits]))

    @cached_property
    def coef(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([c.coef for c in self.circuits]))


def _split(theta: ThetaBundle, x, z) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.shape != (theta.N,) or z.shape != (theta.d,):
        raise InvalidArgument(f"expected len(x) = {theta.N}, len(z) = {theta.d}")
    return x, z


def eval_state_map(theta: ThetaBundle, x, z) -> np.ndarray:
    x, z = _split(theta, x, z)
    return state_map_batch(theta, x[None, :], z[None, :])[0]


def state_map_batch(theta: ThetaBundle, X, Z) -> np.ndarray:
    """Evaluate the state map at ``m`` points; ``X`` is ``(m, N)``, ``Z`` is ``(m, d)``."""
    U = np.ascontiguousarray(np.hstack([np.atleast_2d(X), np.atleast_2d(Z)]), dtype=float)
    if U.shape[1] != theta.N + theta.d:
        raise InvalidArgument("point dimension mismatch")
    out = np.empty((U.shape[0], theta.N))
    for j, c in enumerate(theta.circuits):
        out[:, j] = _kernels.feature_values(c.a, c.b, c.coef, U)
    if DEBUG:
        assert np.all(np.abs(out) <= theta.R * (1 + 1e-12))
    return out


def jacobian_x(theta: ThetaBundle, x, z) -> np.ndarray:
    """``J[j, i] = d F_j / d x_i``."""
    x, z = _split(theta, x, z)
    return jacobian_x_batch(theta, x[None, :], z[None, :])[0]


def jacobian_x_batch(theta: ThetaBundle, X, Z) -> np.ndarray:
    U = np.ascontiguousarray(np.hstack([np.atleast_2d(X), np.atleast_2d(Z)]), dtype=float)
    out = np.empty((U.shape[0], theta.N, theta.N))
    for j, c in enumerate(theta.circuits):
        out[:, j, :] = _kernels.feature_grads(c.a, c.b, c.coef, U)[:, :theta.N]
    return out


def spectral_norm(J, max_iter: int = 100, tol: float = 1e-10) -> float:
    """Largest singular value of ``J`` by power iteration on ``J^T J``."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if not np.any(J):
        return 0.0
    G = J.T @ J
    # deterministic start that is not orthogonal to the top singular vector generically
    v = np.linspace(1.0, 2.0, G.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            v = np.random.default_rng(0).standard_normal(G.shape[0])
            v /= np.linalg.norm(v)
            continue
        new = float(v @ w)
        v = w / nw
        if abs(new - est) <= tol * max(new, 1e-300):
            return float(np.sqrt(max(new, 0.0)))
        est = new
    warnings.warn(f"power iteration did not converge in {max_iter} steps", NumericWarning, stacklevel=2)
    return float(np.sqrt(max(float(v @ G @ v), 0.0)))


def region_points(lo, hi, per_axis: int = 33, cap: int = 100_000, seed: int = 0) -> np.ndarray:
    """Uniform grid over the box ``[lo, hi]``, thinned to ``cap`` points.

    When ``per_axis ** dim`` exceeds ``cap`` the grid is coarsened to fit and
    the remainder filled with uniform Monte Carlo points.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(hi < lo):
        raise InvalidArgument("empty box")
    dim = lo.size
    k = per_axis
    while k ** dim > cap:
        k -= 1
    axes = [np.linspace(l, h, k) for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    extra = cap - grid.shape[0] if per_axis ** dim > cap else 0
    if extra > 0:
        rng = np.random.default_rng(seed)
        grid = np.vstack([grid, lo + (hi - lo) * rng.random((extra, dim))])
    return grid


def lipschitz_estimate(theta: ThetaBundle, x_lo, x_hi, z_lo, z_hi, **grid_kw) -> float:
    """Grid estimate of ``sup ||d_x F(x, z)||_2`` over the box (an under-estimate of the true sup)."""
    pts = region_points(np.r_[np.broadcast_to(x_lo, theta.N), np.broadcast_to(z_lo, theta.d)],
                        np.r_[np.broadcast_to(x_hi, theta.N), np.broadcast_to(z_hi, theta.d)], **grid_kw)
    return max_spectral_norm(jacobian_x_batch(theta, pts[:, :theta.N], pts[:, theta.N:]))


def max_spectral_norm(J_batch: np.ndarray, chunk: int = 20_000) -> float:
    if J_batch.shape[1] == 1 and J_batch.shape[2] == 1:
        return float(np.max(np.abs(J_batch)))
    best = 0.0
    for s in range(0, J_batch.shape[0], chunk):
        sv = np.linalg.svd(J_batch[s:s + chunk], compute_uv=False)
        best = max(best, float(sv[:, 0].max()))
    return best
