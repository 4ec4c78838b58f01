"""Randomised parameter construction from a target's Fourier transform.

A draw sets, for every unit independently, ``Z ~ Bernoulli(p_real)``, a
frequency ``U`` from the real (``Z = 1``) or imaginary (``Z = 0``) density,
``a = 2 pi U``, ``b = (pi / 2)(1 - Z)`` and ``w = mass * sign`` with the sign
of the corresponding part of the transform at ``U``. The QNN built from
``gamma = arccos(w / R)`` is an unbiased estimator of the target, jointly
with its first derivatives.

RNG streams: trial ``t`` of a sweep uses ``default_rng([seed, 1, t])`` and
the Monte Carlo evaluation points use ``default_rng([seed, 0])``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.stats import qmc

from . import _kernels
from .circuit import CircuitParams, amplitude_to_gamma
from .errors import InvalidArgument, SamplingFailure, UnsupportedTarget
from .targets import TargetFunction


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class CircuitFunction:
    """Adapter exposing ``evaluate`` / ``grad`` of a single circuit at stacked points."""

    def __init__(self, circ: CircuitParams):
        self.circ = circ
        self.dim = circ.dim

    def evaluate(self, U):
        U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
        return _kernels.feature_values(self.circ.a, self.circ.b, self.circ.coef, U)

    def grad(self, U):
        U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
        return _kernels.feature_grads(self.circ.a, self.circ.b, self.circ.coef, U)

    __call__ = evaluate


def _draw_units(target: TargetFunction, n: int, rng: np.random.Generator):
    Z = rng.random(n) < target.p_real
    U_re = target.sample_re(rng, n)
    U_im = target.sample_im(rng, n)
    U = np.where(Z[:, None], U_re, U_im)
    sign = np.where(Z, target.sign_re(U_re), target.sign_im(U_im))
    return Z, U, sign


def sample_theta(target: TargetFunction, n: int, R: float, seed=None) -> CircuitParams:
    """Random circuit parameters whose QNN is unbiased for ``target``.

    Requires ``R >= target.mass`` so the amplitudes can be encoded as angles.
    """
    for attr in ("sample_re", "sample_im", "sign_re", "sign_im"):
        if not callable(getattr(target, attr, None)):
            raise UnsupportedTarget(f"target lacks {attr}")
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if R < target.mass * (1 - 1e-12):
        raise InvalidArgument(f"R = {R} is below the sampling mass {target.mass:.6g}")
    return _params_from_draw(target, n, R, _rng(seed))


def _params_from_draw(target, n, R, rng) -> CircuitParams:
    Z, U, sign = _draw_units(target, n, rng)
    a = 2.0 * np.pi * U
    b = 0.5 * np.pi * (1.0 - Z)
    w = target.mass * sign
    return CircuitParams(a, b, amplitude_to_gamma(w, R), R)


def weight_norm_bound(target: TargetFunction, n: int, q: float = 2) -> float:
    """Admissible ``||a^i||`` for the bounded sampler: ``2 pi (3 n I_q / mass)^(1/q)``."""
    return 2.0 * np.pi * (3.0 * n * target.moment(q) / target.mass) ** (1.0 / q)


class BoundedSample(NamedTuple):
    params: CircuitParams
    attempts: int
    bound: float


def sample_theta_bounded(target: TargetFunction, n: int, q: float, R: float, seed=None,
                         max_attempts: int = 10_000) -> BoundedSample:
    """Like :func:`sample_theta`, resampling whole sets until every ``||a^i||`` obeys the bound.

    The first attempt consumes the RNG exactly as :func:`sample_theta` does.
    """
    if q < 2:
        raise InvalidArgument("moment order q must be >= 2")
    bound = weight_norm_bound(target, n, q)
    rng = _rng(seed)
    sample_theta(target, 1, R, np.random.default_rng(0))  # validates target and R only
    worst = []
    for attempt in range(1, max_attempts + 1):
        params = _params_from_draw(target, n, R, rng)
        norms = np.linalg.norm(params.a, axis=1)
        if np.all(norms <= bound):
            return BoundedSample(params, attempt, bound)
        worst.append(norms.max())
    qs = np.quantile(worst, [0.5, 0.9, 0.99])
    raise SamplingFailure(f"no admissible draw in {max_attempts} attempts; bound {bound:.4g}, "
                          f"max-norm quantiles (50/90/99%) {qs.round(4).tolist()}")


# ---------------------------------------------------------------- errors ---

def _as_eval(f) -> Callable:
    return f.evaluate if hasattr(f, "evaluate") else f


def uniform_points(box, n_points: int, seed=None) -> np.ndarray:
    lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in box)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise InvalidArgument("empty box")
    return lo + (hi - lo) * _rng(seed).random((n_points, lo.size))


def error_l2(f, g, box=None, n_points: int = 4096, seed=0, points=None) -> float:
    """Monte Carlo estimate of ``||f - g||^2`` in ``L^2`` of the uniform measure on ``box``."""
    U = points if points is not None else uniform_points(box, n_points, seed)
    diff = _as_eval(f)(U) - _as_eval(g)(U)
    return float(np.mean(diff ** 2))


def error_joint(f, g, box=None, n_points: int = 4096, seed=0, points=None) -> float:
    """Squared ``L^2`` error of the function plus that of every partial derivative.

    ``f`` and ``g`` must expose ``evaluate`` and ``grad``.
    """
    U = points if points is not None else uniform_points(box, n_points, seed)
    val = np.mean((f.evaluate(U) - g.evaluate(U)) ** 2)
    der = np.mean(np.sum((f.grad(U) - g.grad(U)) ** 2, axis=1))
    return float(val + der)


def sup_grid(box, per_axis: int = 257, sobol_points: int = 1 << 15, seed: int = 0) -> np.ndarray:
    """Uniform grid in dimension <= 2, scrambled Sobol points beyond."""
    lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in box)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise InvalidArgument("empty box")
    dim = lo.size
    if dim <= 2:
        axes = [np.linspace(l, h, per_axis) for l, h in zip(lo, hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    pts = qmc.Sobol(dim, scramble=True, seed=seed).random(sobol_points)
    return qmc.scale(pts, lo, hi)


def error_sup(f, g, grid, derivatives: bool = False) -> float:
    """``max |f - g|`` over the grid, plus ``sum_i max |d_i f - d_i g|`` when ``derivatives``."""
    U = np.atleast_2d(grid)
    err = float(np.max(np.abs(_as_eval(f)(U) - _as_eval(g)(U))))
    if derivatives:
        err += float(np.sum(np.max(np.abs(f.grad(U) - g.grad(U)), axis=0)))
    return err


# ------------------------------------------------------------- constants ---

class ApproximationConstants(NamedTuple):
    C: float        # mean-square joint error constant, error <= C / n
    C_bar: float    # 3 C, for the bounded sampler
    C_inf: float    # uniform error constant on [-M, M]^D, error <= C_inf / sqrt(n)


def approximation_constants(target: TargetFunction, M: float) -> ApproximationConstants:
    """Rate constants evaluated on the sampling measure of ``target``."""
    L = target.mass
    D = target.dim
    C = L ** 2 + 4 * np.pi ** 2 * L * float(np.sum(target.coord_moments()))
    I2, I4 = target.moment(2), target.moment(4)
    C_inf = (2 * (np.pi + 1) * L
             + (8 * np.pi * M + 4 * np.pi ** 2) * math.sqrt(D) * math.sqrt(L * I2)
             + 16 * M * np.pi ** 2 * D * math.sqrt(L * I4))
    return ApproximationConstants(C, 3 * C, C_inf)


# ------------------------------------------------------------ rate sweep ---

@dataclass
class RateReport:
    n_values: list
    mean_sq_l2_error: list
    mean_joint_error: list
    sup_error: list
    fitted_slope: float
    constants: ApproximationConstants
    rows: list = field(default_factory=list)  # (n, trial, sq_l2, joint, sup)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, header: dict | None = None) -> None:
        meta = {"constants": self.constants._asdict(), "fitted_slope": self.fitted_slope, **self.meta}
        if header:
            meta.update(header)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "trial", "sq_l2", "joint", "sup"])
            for n, t, l2, j, s in self.rows:
                w.writerow([n, t, repr(float(l2)), repr(float(j)), repr(float(s))])


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _rate_trial(args):
    target, n, R, seed, t, pts, grid = args
    params = sample_theta(target, n, R, np.random.default_rng([seed, 1, t]))
    g = CircuitFunction(params)
    return (n, t, error_l2(g, target, points=pts), error_joint(g, target, points=pts),
            error_sup(g, target, grid, derivatives=True))


def rate_sweep(target: TargetFunction, n_list: Sequence[int], trials: int, R: float, seed: int,
               box=None, n_points: int = 2048, sup_per_axis: int = 65, M: float | None = None,
               workers: int = 1) -> RateReport:
    """Average approximation errors of random draws over ``trials`` for each ``n``.

    ``box`` defaults to ``[-1, 1]^D``; ``M`` (for the uniform constant)
    defaults to the half-width of that box. Trial ``t`` reuses stream
    ``[seed, 1, t]`` for every ``n``, so sizes are compared on paired seeds.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidArgument("n_list must be increasing")
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    D = target.dim
    if box is None:
        box = (-np.ones(D), np.ones(D))
    lo, hi = (np.broadcast_to(np.asarray(v, float), (D,)) for v in box)
    if M is None:
        M = float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))
    pts = uniform_points((lo, hi), n_points, np.random.default_rng([seed, 0]))
    grid = sup_grid((lo, hi), per_axis=sup_per_axis, sobol_points=4096, seed=seed)
    const = approximation_constants(target, M)

    jobs = [(target, n, R, seed, t, pts, grid) for n in n_list for t in range(trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_rate_trial, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_rate_trial(j) for j in jobs]
    arr = np.array([r[2:] for r in rows]).reshape(len(n_list), trials, 3).mean(axis=1)
    joints = arr[:, 1].tolist()
    return RateReport(n_list, arr[:, 0].tolist(), joints, arr[:, 2].tolist(), loglog_slope(n_list, joints),
                      const, rows, {"trials": trials, "R": R, "seed": seed, "n_points": n_points,
                                    "box": [lo.tolist(), hi.tolist()], "M": M})


# ------------------------------------------------------- amplitude fits ---

class FitResult(NamedTuple):
    params: CircuitParams
    rmse: float
    weights: np.ndarray


def cosine_features(A, b, U) -> np.ndarray:
    return np.cos(np.atleast_2d(U) @ np.asarray(A).T + np.asarray(b))


def fit_amplitudes(features, points, values, R: float | None = None, ridge: float = 1e-8) -> FitResult:
    """Ridge fit of ``values ~ sum_i w_i cos(b_i + a_i . u)`` over fixed features ``(A, b)``.

    The weights are encoded as ``gamma_i = arccos(n w_i / R)``. With
    ``R=None`` the smallest admissible scale ``max |n w_i|`` is used.
    """
    A, b = (np.asarray(v, dtype=float) for v in features)
    A = np.atleast_2d(A)
    if ridge < 0:
        raise InvalidArgument("ridge must be >= 0")
    U = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    if U.shape[0] != y.size or U.shape[1] != A.shape[1]:
        raise InvalidArgument("points/values/features shapes disagree")
    n = A.shape[0]
    Phi = cosine_features(A, b, U)
    if ridge > 0:
        Phi_aug = np.vstack([Phi, np.sqrt(ridge) * np.eye(n)])
        y_aug = np.concatenate([y, np.zeros(n)])
    else:
        Phi_aug, y_aug = Phi, y
    w = np.linalg.lstsq(Phi_aug, y_aug, rcond=None)[0]
    amp = n * w
    if R is None:
        R = float(max(np.max(np.abs(amp)), 1e-300))
    params = CircuitParams(A, b, amplitude_to_gamma(amp, R), R)
    rmse = float(np.sqrt(np.mean((Phi @ w - y) ** 2)))
    return FitResult(params, rmse, w)
