"""Recurrent QNN dynamics, echo-state checks and filter constructions.

Two update rules are supported::

    plain     x_t[j] = F_j(x_{t-1}, z_t)
    modified  x_t[j] = F_j(P_j x_{t-1}, z_t)

with ``F_j`` the QNN of circuit ``j``. Every component at step ``t`` reads
the state of step ``t - 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from . import _kernels
from .circuit import CircuitParams
from .errors import InvalidArgument, NumericWarning
from .fourier import (CircuitFunction, approximation_constants, fit_amplitudes, sample_theta)
from .qnn import ThetaBundle, max_spectral_norm, region_points
from .targets import TargetFunction

Mode = Literal["plain", "modified"]


@dataclass(frozen=True, eq=False)
class ReservoirSystem:
    theta: ThetaBundle
    preprocessors: tuple | None = None
    mode: Mode = "plain"

    def __post_init__(self):
        if self.mode not in ("plain", "modified"):
            raise InvalidArgument(f"unknown mode {self.mode!r}")
        if self.mode == "modified":
            if self.preprocessors is None:
                raise InvalidArgument("modified mode needs preprocessors")
            P = np.array(self.preprocessors, dtype=float)
            if P.shape != (self.N, self.N, self.N):
                raise InvalidArgument(f"expected {self.N} preprocessors of shape ({self.N}, {self.N})")
            P.setflags(write=False)
            object.__setattr__(self, "preprocessors", tuple(P))
            object.__setattr__(self, "_P", P)
        else:
            object.__setattr__(self, "_P", np.zeros((self.N, self.N, self.N)))

    @property
    def N(self) -> int:
        return self.theta.N

    @property
    def d(self) -> int:
        return self.theta.d

    @property
    def R(self) -> float:
        return self.theta.R

    @property
    def P(self) -> np.ndarray:
        return self._P

    def step(self, x, z) -> np.ndarray:
        return run(self, np.atleast_2d(z), x)[0]


def _stack_inputs(system: ReservoirSystem, z_seq, x0):
    """Normalise to ``Z (S, T, d)`` and ``X0 (S, N)``; returns whether the input was batched."""
    Z = np.asarray(z_seq, dtype=float)
    batched = Z.ndim == 3
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim == 2:
        Z = Z[None]
    if Z.ndim != 3 or Z.shape[2] != system.d:
        raise InvalidArgument(f"inputs must have {system.d} components per step")
    if not np.all(np.isfinite(Z)):
        raise InvalidArgument("inputs must be finite")
    S = Z.shape[0]
    if x0 is None:
        X0 = np.zeros((S, system.N))
    else:
        X0 = np.asarray(x0, dtype=float)
        if X0.ndim == 1:
            X0 = np.broadcast_to(X0, (S, X0.size))
        if X0.shape != (S, system.N):
            raise InvalidArgument(f"initial state must have {system.N} components")
    return np.ascontiguousarray(Z), np.ascontiguousarray(X0), batched


def run(system: ReservoirSystem, z_seq, x0=None) -> np.ndarray:
    """State trajectory ``x_1 .. x_T`` driven by ``z_seq``.

    ``z_seq`` is ``(T, d)`` (or ``(T,)`` for ``d = 1``) giving ``(T, N)``, or
    a batch ``(S, T, d)`` giving ``(S, T, N)``; ``x0`` defaults to zeros and
    may be ``(N,)`` or ``(S, N)``.
    """
    Z, X0, batched = _stack_inputs(system, z_seq, x0)
    th = system.theta
    out = _kernels.run_states(th.A, th.b, th.coef, system.P, system.mode == "modified", Z, X0)
    return out if batched else out[0]


# ------------------------------------------------------------------- ESP ---

@dataclass
class ESPResult:
    converged: bool
    rate: float
    distances: np.ndarray           # max pairwise distance after each step
    steps_to_tol: int | None        # first step with distance <= tol

    def __bool__(self):
        return self.converged


def decay_rate(dist: np.ndarray, floor: float = 1e-13) -> float:
    """Per-step geometric rate fitted to ``log dist`` over the steps above ``floor``."""
    dist = np.asarray(dist, dtype=float)
    idx = np.flatnonzero(dist > floor)
    # keep only the initial run above the floor; later round-off blips are noise
    if idx.size:
        stop = np.flatnonzero(np.diff(idx) != 1)
        idx = idx[: stop[0] + 1] if stop.size else idx
    if idx.size < 2:
        return 0.0
    slope = np.polyfit(idx.astype(float), np.log(dist[idx]), 1)[0]
    return float(np.exp(slope))


def check_esp(system: ReservoirSystem, z_seq, num_initial_states: int = 8, seed=0,
              tol: float = 1e-8) -> ESPResult:
    """Drive ``num_initial_states`` random starts in ``[-R, R]^N`` with one input sequence."""
    if num_initial_states < 2:
        raise InvalidArgument("need at least two initial states")
    Z = np.asarray(z_seq, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    rng = np.random.default_rng(seed)
    X0 = system.R * (2 * rng.random((num_initial_states, system.N)) - 1)
    traj = run(system, np.broadcast_to(Z, (num_initial_states,) + Z.shape), X0)
    diffs = traj[:, None, :, :] - traj[None, :, :, :]
    dist = np.sqrt(np.sum(diffs ** 2, axis=-1)).max(axis=(0, 1))
    below = np.flatnonzero(dist <= tol)
    return ESPResult(bool(dist[-1] <= tol), decay_rate(dist), dist,
                     int(below[0]) + 1 if below.size else None)


def lipschitz_grid(system: ReservoirSystem, z_lo, z_hi, x_bound: float | None = None, **grid_kw) -> float:
    """Grid estimate of ``sup ||d_x F||_2`` over ``[-x_bound, x_bound]^N x [z_lo, z_hi]``.

    ``x_bound`` defaults to ``R``, which contains every reachable state.
    In modified mode the preprocessor enters through the chain rule.
    """
    th = system.theta
    xb = system.R if x_bound is None else x_bound
    lo = np.r_[np.full(th.N, -xb), np.broadcast_to(z_lo, th.d)]
    hi = np.r_[np.full(th.N, xb), np.broadcast_to(z_hi, th.d)]
    pts = region_points(lo, hi, **grid_kw)
    X, Zp = pts[:, :th.N], pts[:, th.N:]
    J = np.empty((pts.shape[0], th.N, th.N))
    for j, c in enumerate(th.circuits):
        if system.mode == "modified":
            Pj = system.P[j]
            U = np.ascontiguousarray(np.hstack([X @ Pj.T, Zp]))
            J[:, j, :] = _kernels.feature_grads(c.a, c.b, c.coef, U)[:, :th.N] @ Pj
        else:
            U = np.ascontiguousarray(pts)
            J[:, j, :] = _kernels.feature_grads(c.a, c.b, c.coef, U)[:, :th.N]
    return max_spectral_norm(J)


# ------------------------------------------------------- preprocessing ---

def build_shift_preprocessors(K: int, d: int, m: int) -> tuple[int, list[np.ndarray]]:
    """Shift matrices giving a ``K``-step finite memory.

    The state splits as ``[x^(1), ..., x^(K)]`` with ``x^(1)`` of size ``m``
    and the rest of size ``d``. Every row of block ``k < K`` sees
    ``[x^(k+1), ..., x^(K), 0, ...]``; the last block sees zeros.
    """
    if K < 1 or d < 1 or m < 1:
        raise InvalidArgument("K, d and m must be >= 1")
    N = (K - 1) * d + m
    ends = [m + (k - 1) * d for k in range(1, K + 1)]  # l_k, 1-based block ends
    Ps = []
    for k in range(1, K + 1):
        start = 0 if k == 1 else ends[k - 2]
        for _ in range(start, ends[k - 1]):
            P = np.zeros((N, N))
            if k < K:
                lk = ends[k - 1]
                for row in range(d * (K - k)):
                    P[row, row + lk] = 1.0
            Ps.append(P)
    return N, Ps


def block_slices(K: int, d: int, m: int) -> list[slice]:
    ends = [m + (k - 1) * d for k in range(1, K + 1)]
    return [slice(0 if k == 0 else ends[k - 1], ends[k]) for k in range(K)]


# --------------------------------------------------------------- readout ---

@dataclass
class Readout:
    W: np.ndarray        # (m, N)
    rmse: float

    def __call__(self, states):
        return np.asarray(states) @ self.W.T


def train_readout(states, targets, ridge: float = 1e-8) -> Readout:
    """Ridge least squares ``y_t ~ W x_t`` (no intercept)."""
    X = np.asarray(states, dtype=float).reshape(-1, np.shape(states)[-1])
    Y = np.asarray(targets, dtype=float)
    Y = Y.reshape(X.shape[0], -1)
    if not ridge > 0:
        raise InvalidArgument("ridge must be > 0")
    G = X.T @ X
    cond = np.linalg.cond(G) if X.shape[0] else math.inf
    if not np.isfinite(cond) or cond > 1e14:
        warnings.warn(f"readout Gram matrix is ill-conditioned (cond = {cond:.3g})", NumericWarning,
                      stacklevel=2)
    N = X.shape[1]
    Xa = np.vstack([X, np.sqrt(ridge) * np.eye(N)])
    Ya = np.vstack([Y, np.zeros((N, Y.shape[1]))])
    W = np.linalg.lstsq(Xa, Ya, rcond=None)[0].T
    rmse = float(np.sqrt(np.mean((X @ W.T - Y) ** 2)))
    return Readout(W, rmse)


# ---------------------------------------------------------------- tasks ---

@dataclass
class FilterTask:
    """Causal time-invariant target filter on sequences drawn uniformly from ``input_domain``.

    ``target_filter`` maps a batch ``(S, T, d)`` to outputs ``(S, T, m)``.
    """
    input_domain: tuple
    target_filter: Callable
    sequence_length: int = 300
    washout: int = 50

    def __post_init__(self):
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in self.input_domain)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InvalidArgument("empty input domain")
        if not 0 <= self.washout < self.sequence_length:
            raise InvalidArgument("washout must be shorter than the sequence")
        self.input_domain = (lo, hi)

    @property
    def d(self) -> int:
        return self.input_domain[0].size

    def sample_inputs(self, num_sequences: int, seed) -> np.ndarray:
        lo, hi = self.input_domain
        rng = np.random.default_rng(seed)
        return lo + (hi - lo) * rng.random((num_sequences, self.sequence_length, self.d))


def filter_error(system: ReservoirSystem, readout, task: FilterTask, num_sequences: int = 100,
                 seed=0, per_sequence: bool = False):
    """``max_s max_{t >= washout} ||y_t - yhat_t||`` over sampled sequences (a sup under-estimate).

    ``readout`` is a :class:`Readout`, a callable on states, or ``None`` for
    the raw state.
    """
    Z = task.sample_inputs(num_sequences, seed)
    states = run(system, Z)
    out = states if readout is None else readout(states)
    target = np.asarray(task.target_filter(Z), dtype=float).reshape(out.shape)
    err = np.linalg.norm(out - target, axis=-1)[:, task.washout:].max(axis=1)
    return err if per_sequence else float(err.max())


# ------------------------------------------ contractive filter bound ---

def theoretical_bound(C_inf: Sequence[float], lam: float, N: int, n: int) -> float:
    """``sqrt(N) max C_inf / ((1 - lam) sqrt(n))``, valid for ``n > n0``."""
    if not 0 < lam < 1:
        raise InvalidArgument("lambda must lie in (0, 1)")
    if n <= n0(C_inf, lam, N):
        raise InvalidArgument("n must exceed n0")
    return math.sqrt(N) * max(C_inf) / ((1 - lam) * math.sqrt(n))


def n0(C_inf: Sequence[float], lam: float, N: int) -> float:
    if not 0 < lam < 1:
        raise InvalidArgument("lambda must lie in (0, 1)")
    return N ** 2 * max(C_inf) ** 2 / (1 - lam) ** 2


class StateMap:
    """Vector state map ``F = (F_1, ..., F_N)`` whose components act on ``(x, z)``."""

    def __init__(self, components: Sequence[TargetFunction], d: int):
        self.components = list(components)
        self.N = len(self.components)
        self.d = int(d)
        if any(c.dim != self.N + self.d for c in self.components):
            raise InvalidArgument("each component must take N + d arguments")

    def __call__(self, X, Z) -> np.ndarray:
        U = np.hstack([np.atleast_2d(X), np.atleast_2d(Z)])
        return np.stack([c.evaluate(U) for c in self.components], axis=1)

    def jacobian_x(self, X, Z) -> np.ndarray:
        U = np.hstack([np.atleast_2d(X), np.atleast_2d(Z)])
        return np.stack([c.grad(U)[:, :self.N] for c in self.components], axis=1)

    def lipschitz(self, x_bound: float, z_lo, z_hi, **grid_kw) -> float:
        lo = np.r_[np.full(self.N, -x_bound), np.broadcast_to(z_lo, self.d)]
        hi = np.r_[np.full(self.N, x_bound), np.broadcast_to(z_hi, self.d)]
        pts = region_points(lo, hi, **grid_kw)
        return max_spectral_norm(self.jacobian_x(pts[:, :self.N], pts[:, self.N:]))

    def filter(self, Z, x0=None) -> np.ndarray:
        """Iterate the recursion on a batch of sequences ``(S, T, d)`` from ``x0`` (zeros)."""
        Z = np.asarray(Z, dtype=float)
        S, T, _ = Z.shape
        x = np.zeros((S, self.N)) if x0 is None else np.broadcast_to(x0, (S, self.N)).copy()
        out = np.empty((S, T, self.N))
        for t in range(T):
            x = self(x, Z[:, t, :])
            out[:, t, :] = x
        return out


def sample_reservoir(fmap: StateMap, n: int, R: float, seed) -> ReservoirSystem:
    """Plain RQNN with one random-feature circuit per component; stream ``[*seed, 3, j]``."""
    base = [int(v) for v in np.atleast_1d(seed)]
    circs = [sample_theta(c, n, R, np.random.default_rng([*base, 3, j]))
             for j, c in enumerate(fmap.components)]
    return ReservoirSystem(ThetaBundle.from_circuits(circs, fmap.d))


@dataclass
class FilterBoundSetup:
    fmap: StateMap
    lam: float
    C_inf: list
    n0: float
    M: float
    R: float

    def bound(self, n: int) -> float:
        return theoretical_bound(self.C_inf, self.lam, self.fmap.N, n)


def filter_bound_setup(fmap: StateMap, R: float, z_lo=-1.0, z_hi=1.0, x_bound: float | None = None,
                   **grid_kw) -> FilterBoundSetup:
    """Constants for the state-map bound.

    ``lam`` is a grid estimate of ``sup ||d_x F||_2``; the grid spans
    ``|x_i| <= x_bound`` (default ``R + 4``), which must cover where the
    supremum is attained. ``M = max(R, |z|_inf)`` bounds the region where
    the uniform approximation is needed.
    """
    xb = R + 4.0 if x_bound is None else x_bound
    lam = fmap.lipschitz(xb, z_lo, z_hi, **grid_kw)
    M = float(max(R, np.max(np.abs(z_lo)), np.max(np.abs(z_hi))))
    C_inf = [approximation_constants(c, M).C_inf for c in fmap.components]
    return FilterBoundSetup(fmap, lam, C_inf, n0(C_inf, lam, fmap.N), M, R)


# ---------------------------------------- finite-memory construction ---

@dataclass
class FiniteMemoryResult:
    system: ReservoirSystem
    readout: Readout
    block_rmse: list          # training RMSE per state component
    K: int
    R: float
    meta: dict = field(default_factory=dict)


def _random_features(rng, n, dim, active, scale):
    A = np.zeros((n, dim))
    A[:, active] = scale * rng.standard_normal((n, len(active)))
    b = 2 * np.pi * rng.random(n)
    return A, b


def build_finite_memory(G: Callable, K: int, d: int, m: int, n: int, seed, z_lo=-1.0, z_hi=1.0,
                   margin: float = 0.1, fit_points: int = 4000, freq_scale: float = 2.0,
                   ridge: float = 1e-8) -> tuple[ReservoirSystem, list]:
    """Modified RQNN whose first block approximates ``G(z_{t-K+1}, ..., z_t)``.

    ``G`` takes ``(m_pts, K * d)`` arrays ordered oldest input first and
    returns ``(m_pts, m)``. Blocks ``2..K`` are fitted to copy their input
    (the last block copies ``z_t``), so block ``k`` carries ``z_{t-K+k}``.
    All circuits share ``n`` and the smallest common admissible ``R``.
    """
    N, Ps = build_shift_preprocessors(K, d, m)
    D = N + d
    rng = np.random.default_rng([seed, 4])
    lo = np.broadcast_to(np.asarray(z_lo, float), (d,)) - margin
    hi = np.broadcast_to(np.asarray(z_hi, float), (d,)) + margin
    # sampled inputs (u = (P x, z)) for every block
    U_hist = lo + (hi - lo) * rng.random((fit_points, K * d))   # oldest first
    slices = block_slices(K, d, m)
    fits, rmses = [], []
    for j in range(N):
        k = next(i for i, s in enumerate(slices) if s.start <= j < s.stop) + 1
        U = np.zeros((fit_points, D))
        if k == 1:
            # P x = [x^(2..K)] holds z_{t-K+1..t-1}; z slot holds z_t
            U[:, :(K - 1) * d] = U_hist[:, :(K - 1) * d]
            U[:, N:] = U_hist[:, (K - 1) * d:]
            y = np.asarray(G(U_hist), dtype=float).reshape(fit_points, m)[:, j]
            active = list(range((K - 1) * d)) + list(range(N, D))
        elif k < K:
            # copy the next block: P x starts with x^(k+1)
            U[:, :(K - k) * d] = U_hist[:, :(K - k) * d]
            U[:, N:] = U_hist[:, (K - 1) * d:]
            y = U[:, j - slices[k - 1].start]
            active = [j - slices[k - 1].start]
        else:
            U[:, N:] = U_hist[:, (K - 1) * d:]
            y = U[:, N + j - slices[k - 1].start]
            active = [N + j - slices[k - 1].start]
        A, b = _random_features(rng, n, D, active, freq_scale)
        fit = fit_amplitudes((A, b), U, y, ridge=ridge)
        fits.append(fit)
        rmses.append(fit.rmse)
    R = max(f.params.R for f in fits)
    circs = [f.params.with_R(R) for f in fits]
    system = ReservoirSystem(ThetaBundle.from_circuits(circs, d), tuple(Ps), "modified")
    return system, rmses


def lagged_filter(G: Callable, K: int, d: int) -> Callable:
    """Filter ``y_t = G(z_{t-K+1}, ..., z_t)`` with zero padding before the start."""

    def apply(Z):
        Z = np.asarray(Z, dtype=float)
        S, T, _ = Z.shape
        pad = np.concatenate([np.zeros((S, K - 1, d)), Z], axis=1)
        win = np.stack([pad[:, i:i + T, :] for i in range(K)], axis=2).reshape(S * T, K * d)
        return np.asarray(G(win), dtype=float).reshape(S, T, -1)

    return apply


def finite_memory_pipeline(G: Callable, K: int, d: int, m: int, n: int, seed,
                      train_sequences: int = 20, T: int = 300, washout: int = 50,
                      readout_ridge: float = 1e-8, **build_kw) -> FiniteMemoryResult:
    system, rmses = build_finite_memory(G, K, d, m, n, seed, **build_kw)
    task = FilterTask((np.full(d, build_kw.get("z_lo", -1.0)), np.full(d, build_kw.get("z_hi", 1.0))),
                      lagged_filter(G, K, d), T, washout)
    Z = task.sample_inputs(train_sequences, [seed, 5])
    states = run(system, Z)[:, washout:, :]
    targets = task.target_filter(Z)[:, washout:, :]
    readout = train_readout(states.reshape(-1, system.N), targets.reshape(-1, m), readout_ridge)
    return FiniteMemoryResult(system, readout, rmses, K, system.R, {"task": task})
