"""Finite-shot estimates of the QNN output and of noisy recurrent trajectories.

Shots are drawn from the four-class marginal ``m mod 4`` of the register,
which is all the output formula needs. RNG streams: the draw for run ``r``,
step ``t`` and component ``j`` uses ``default_rng([seed, r, t, j])``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .circuit import CircuitParams, apply_circuit, fast_probs
from .errors import InvalidArgument
from .fourier import loglog_slope
from .qnn import eval_component
from .reservoir import ReservoirSystem, run


@dataclass(frozen=True)
class ShotConfig:
    """``S = 0`` selects exact evaluation (no sampling).

    With ``resample_each_step=False`` a component reuses the same child
    stream at every step (common random numbers across time); shots remain
    a fresh multinomial draw per evaluation.
    """
    S: int
    seed: int = 0
    resample_each_step: bool = True

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 0:
            raise InvalidArgument("S must be a nonnegative integer (0 = exact)")

    @property
    def exact(self) -> bool:
        return self.S == 0


def _validate_probs(probs, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise InvalidArgument("probabilities must be nonnegative and sum to 1")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def sample_counts(probs, S: int, seed=None, size: int | None = None) -> np.ndarray:
    """Multinomial counts of ``S`` shots (``size`` independent repetitions if given)."""
    if S < 1:
        raise InvalidArgument("S must be >= 1")
    p = _validate_probs(probs)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.multinomial(S, p, size=size)


def estimate_probs(probs, S: int, seed=None, size: int | None = None) -> np.ndarray:
    return sample_counts(probs, S, seed, size) / S


def output_from_probs(p, R: float):
    p = np.asarray(p)
    return R - 2.0 * R * (p[..., 1] + p[..., 2])


def eval_qnn_shots(circ: CircuitParams, x, z, cfg: ShotConfig, rng=None, full: bool = False) -> float:
    """Shot estimate of the QNN output; ``full`` samples all register outcomes from the dense state."""
    if cfg.exact:
        return eval_component(circ, x, z)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if full:
        amps = apply_circuit(circ, x, z)
        p_full = _validate_probs(np.abs(amps) ** 2)
        counts = sample_counts(p_full, cfg.S, rng).reshape(-1, 4).sum(axis=0)
    else:
        counts = sample_counts(fast_probs(circ, x, z), cfg.S, rng)
    return float(output_from_probs(counts / cfg.S, circ.R))


def run_shots(system: ReservoirSystem, z_seq, x0=None, cfg: ShotConfig = ShotConfig(0), run_id: int = 0):
    """Trajectory where each component output is a fresh ``S``-shot estimate."""
    if cfg.exact:
        return run(system, z_seq, x0)
    Z = np.asarray(z_seq, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[1] != system.d:
        raise InvalidArgument(f"inputs must be (T, {system.d})")
    N = system.N
    x = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (N,):
        raise InvalidArgument(f"initial state must have {N} components")
    out = np.empty((Z.shape[0], N))
    circs = system.theta.circuits
    for t in range(Z.shape[0]):
        new = np.empty(N)
        for j, c in enumerate(circs):
            xin = system.P[j] @ x if system.mode == "modified" else x
            u = np.concatenate([xin, Z[t]])[None, :]
            p = _kernels.class_probs(c.a, c.b, c.gamma, u)[0]
            step = t if cfg.resample_each_step else 0
            rng = np.random.default_rng([cfg.seed, run_id, step, j])
            new[j] = output_from_probs(sample_counts(p, cfg.S, rng) / cfg.S, c.R)
        x = new
        out[t] = x
    return out


# ----------------------------------------------------------------- sweep ---

@dataclass
class ShotReport:
    S_values: list
    rmse_prob: list          # mean over trials of the worst per-class RMSE
    rmse_qnn: list
    traj_err: list
    slope: float
    rows: list = field(default_factory=list)   # (S, trial, rmse_prob, rmse_qnn, traj_err)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, header: dict | None = None) -> None:
        meta = {"slope": self.slope, **self.meta, **(header or {})}
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["S", "trial", "rmse_prob", "rmse_qnn", "traj_err"])
            for S, t, a, b, c in self.rows:
                w.writerow([S, t, repr(float(a)), repr(float(b)), repr(float(c))])


def shots_sweep(system: ReservoirSystem, S_list, trials: int, seed: int, reps: int = 1000,
                runs: int = 200, T: int = 60, z_lo=-1.0, z_hi=1.0) -> ShotReport:
    """Shot-noise errors per ``S``.

    Trial ``k`` fixes a point ``(x, z)`` (drawn from ``[-R, R]^N x D_d``)
    and an input sequence of length ``T``, shared by every ``S``.
    ``rmse_*`` use ``reps`` repetitions at that point for circuit ``k mod N``;
    ``traj_err`` is the mean over ``runs`` noisy trajectories of
    ``||x_T^S - x_T||``.
    """
    N, d, R = system.N, system.d, system.R
    circs = system.theta.circuits
    rows = []
    points = []
    for k in range(trials):
        rng = np.random.default_rng([seed, 7, k])
        x = R * (2 * rng.random(N) - 1)
        z = z_lo + (z_hi - z_lo) * rng.random(d)
        zs = z_lo + (z_hi - z_lo) * rng.random((T, d))
        points.append((x, z, zs, run(system, zs)[-1]))
    for S in S_list:
        for k, (x, z, zs, exact_end) in enumerate(points):
            j = k % N
            c = circs[j]
            xin = system.P[j] @ x if system.mode == "modified" else x
            p = fast_probs(c, xin, z)
            est = estimate_probs(p, S, np.random.default_rng([seed, 8, S, k]), size=reps)
            rmse_p = float(np.sqrt(np.mean((est - p) ** 2, axis=0)).max())
            exact_out = float(output_from_probs(p, c.R))
            rmse_q = float(np.sqrt(np.mean((output_from_probs(est, c.R) - exact_out) ** 2)))
            errs = [np.linalg.norm(run_shots(system, zs, None, ShotConfig(S, _mix(seed, S, k)), r)[-1]
                                   - exact_end) for r in range(runs)]
            rows.append((S, k, rmse_p, rmse_q, float(np.mean(errs))))
    S_values = list(S_list)

    def mean_of(col):
        return [float(np.mean([r[col] for r in rows if r[0] == S])) for S in S_values]

    rq = mean_of(3)
    return ShotReport(S_values, mean_of(2), rq, mean_of(4), loglog_slope(S_values, rq), rows,
                      {"trials": trials, "seed": seed, "reps": reps, "runs": runs, "T": T})


def _mix(seed: int, S: int, k: int) -> int:
    """Distinct trajectory seed per ``(seed, S, trial)``."""
    return int(np.random.SeedSequence([seed, 9, S, k]).generate_state(1)[0])


def trajectory_bound(lam: float, N: int, R: float, S: int) -> float:
    """``sqrt(N) 4 R / ((1 - lam) sqrt(S))``."""
    if not 0 <= lam < 1:
        raise InvalidArgument("lambda must lie in [0, 1)")
    return np.sqrt(N) * 4 * R / ((1 - lam) * np.sqrt(S))
