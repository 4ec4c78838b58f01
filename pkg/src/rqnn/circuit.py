"""Parametric circuit ``C = U_theta(x, z) V`` on ``2 + ceil(log2 n)`` qubits.

Two evaluation paths are provided. The dense path builds the full
``n_U x n_U`` unitaries and is meant as a reference oracle for small ``n``.
The fast path (:func:`fast_probs`) evaluates the measurement probabilities in
closed form at cost ``O(n (N + d))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from . import _kernels
from .errors import AmplitudeOutOfRange, InvalidArgument, InvalidState, UnsupportedMethod

Axis = Literal["X", "Y", "Z"]

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)

DENSE_MAX_UNITS = 64


def make_rotation(axis: Axis, angle: float) -> np.ndarray:
    """Single-qubit rotation ``exp(-i angle sigma / 2)`` about ``axis``."""
    angle = float(angle)
    if not np.isfinite(angle):
        raise InvalidArgument(f"rotation angle must be finite, got {angle}")
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if axis == "X":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "Y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "Z":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex)
    raise InvalidArgument(f"unknown rotation axis {axis!r}")


def _inputs(a, x, z) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    u = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)),
                        np.atleast_1d(np.asarray(z, dtype=float))])
    if a.shape[-1] != u.shape[0]:
        raise InvalidArgument(f"weight length {a.shape[-1]} != len(x) + len(z) = {u.shape[0]}")
    return a, u


def build_u1(a, b: float, x, z) -> np.ndarray:
    """Data-dependent gate ``R_x(delta)`` with ``delta = -b - a . (x, z)``."""
    a, u = _inputs(a, x, z)
    return make_rotation("X", -float(b) - float(a @ u))


def build_u1_product(a, b: float, x, z) -> np.ndarray:
    """The same gate as :func:`build_u1`, assembled as ``H R_z(-b) R_z(-a_k u_k)... H``."""
    a, u = _inputs(a, x, z)
    inner = np.eye(2, dtype=complex)
    for ak, uk in zip(a, u):
        inner = make_rotation("Z", -ak * uk) @ inner
    inner = make_rotation("Z", -float(b)) @ inner
    return HADAMARD @ inner @ HADAMARD


def register_size(n: int) -> int:
    """Smallest power of two that is at least ``4 n``."""
    if n < 1:
        raise InvalidArgument("unit count must be >= 1")
    return 1 << (4 * n - 1).bit_length()


@dataclass(frozen=True, eq=False)
class CircuitParams:
    """Parameters ``(a^i, b^i, gamma^i)_{i<n}`` of one circuit plus the scale ``R``.

    ``a`` has shape ``(n, N + d)``; the first ``N`` columns multiply the
    state ``x`` and the remaining ``d`` the input ``z``.
    """

    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    R: float = 1.0

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float, ndmin=1)
        g = np.array(self.gamma, dtype=float, ndmin=1)
        if not (a.shape[0] == b.shape[0] == g.shape[0]) or a.shape[0] < 1:
            raise InvalidArgument("a, b and gamma must describe the same number (>= 1) of units")
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise InvalidArgument("weights must be finite")
        if np.any(g < 0) or np.any(g > 2 * np.pi):
            raise InvalidArgument("gamma must lie in [0, 2 pi]")
        if not self.R > 0:
            raise InvalidArgument("R must be positive")
        for arr in (a, b, g):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "R", float(self.R))

    @classmethod
    def zeros(cls, n: int, dim: int, R: float = 1.0) -> "CircuitParams":
        return cls(np.zeros((n, dim)), np.zeros(n), np.zeros(n), R)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        """Length ``N + d`` of each weight vector."""
        return self.a.shape[1]

    @property
    def n_U(self) -> int:
        return register_size(self.n)

    @property
    def kappa(self) -> int:
        """Number of padding identity blocks."""
        return self.n_U // 4 - self.n

    @property
    def n_qubits(self) -> int:
        return self.n_U.bit_length() - 1

    @cached_property
    def coef(self) -> np.ndarray:
        """Effective output weights ``R cos(gamma^i) / n`` of the cosine expansion."""
        return self.R * np.cos(self.gamma) / self.n

    def with_R(self, R: float) -> "CircuitParams":
        """Same function, different amplitude scale (``gamma`` re-encoded)."""
        w = self.R * np.cos(self.gamma)
        return CircuitParams(self.a, self.b, amplitude_to_gamma(w, R), R)


def amplitude_to_gamma(w, R: float) -> np.ndarray:
    """Encode amplitudes ``|w| <= R`` as angles ``gamma = arccos(w / R)``."""
    w = np.asarray(w, dtype=float)
    ratio = w / R
    if np.any(np.abs(ratio) > 1 + 1e-12):
        raise AmplitudeOutOfRange(
            f"max |amplitude| = {np.max(np.abs(w)):.6g} exceeds R = {R:.6g}; raise R")
    return np.arccos(np.clip(ratio, -1.0, 1.0))


def _check_point(params: CircuitParams, x, z) -> np.ndarray:
    _, u = _inputs(params.a[0], x, z)
    return u


def build_U(params: CircuitParams, x, z, *, return_blocks: bool = False):
    """Block-diagonal uniformly controlled gate ``U_theta(x, z)``.

    Block ``i < n`` is ``R_x(delta^i) (x) R_y(gamma^i)``; the ``kappa``
    trailing blocks are 4x4 identities. With ``return_blocks`` the list of
    the ``n`` active 4x4 blocks is returned as well.
    """
    u = _check_point(params, x, z)
    n_U = params.n_U
    if params.n > DENSE_MAX_UNITS:
        raise InvalidArgument(f"dense path limited to n <= {DENSE_MAX_UNITS}")
    mat = np.eye(n_U, dtype=complex)
    blocks = []
    delta = -params.b - params.a @ u
    for i in range(params.n):
        blk = np.kron(make_rotation("X", delta[i]), make_rotation("Y", params.gamma[i]))
        mat[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blk
        blocks.append(blk)
    return (mat, blocks) if return_blocks else mat


def target_state(n: int) -> np.ndarray:
    """``|psi> = n^{-1/2} sum_i |4 i>`` in the ``register_size(n)`` register."""
    psi = np.zeros(register_size(n), dtype=complex)
    psi[0:4 * n:4] = 1.0 / np.sqrt(n)
    return psi


def build_V(params: CircuitParams, method: Literal["reflection", "hadamard"] = "reflection") -> np.ndarray:
    """A unitary mapping ``|0...0>`` to :func:`target_state`.

    ``reflection`` returns ``2|phi><phi| - I`` with ``|phi> ~ |0> + |psi>``.
    ``hadamard`` returns Hadamards on the control qubits and identity on the
    two target qubits; it needs ``kappa == 0``.
    """
    n, n_U = params.n, params.n_U
    if method == "hadamard":
        if params.kappa != 0:
            raise UnsupportedMethod("hadamard construction requires n to be a power of two")
        ctrl = np.ones((1, 1), dtype=complex)
        for _ in range(params.n_qubits - 2):
            ctrl = np.kron(ctrl, HADAMARD)
        return np.kron(ctrl, np.eye(4, dtype=complex))
    if method != "reflection":
        raise UnsupportedMethod(f"unknown V construction {method!r}")
    psi = target_state(n)
    zero = np.zeros(n_U, dtype=complex)
    zero[0] = 1.0
    overlap = np.vdot(zero, psi).real
    phi = (zero + psi) / np.sqrt(2.0 * (1.0 + overlap))
    return 2.0 * np.outer(phi, phi.conj()) - np.eye(n_U, dtype=complex)


def zero_state(n_qubits: int) -> np.ndarray:
    s = np.zeros(1 << n_qubits, dtype=complex)
    s[0] = 1.0
    return s


def apply_circuit(params: CircuitParams, x, z, method: str = "reflection") -> np.ndarray:
    """Dense statevector ``U_theta(x, z) V |0...0>``."""
    V = build_V(params, method)
    U = build_U(params, x, z)
    return U @ (V @ zero_state(params.n_qubits))


def measure_probs(state, tol: float = 1e-9) -> np.ndarray:
    """Probabilities of the four outcome classes ``k = m mod 4`` (last two qubits)."""
    amps = np.asarray(state)
    if amps.ndim != 1 or amps.size % 4:
        raise InvalidState("state length must be a multiple of 4")
    p = np.abs(amps) ** 2
    if abs(p.sum() - 1.0) > tol:
        raise InvalidState(f"state norm^2 = {p.sum():.12g} deviates from 1")
    return p.reshape(-1, 4).sum(axis=0)


def dense_probs(params: CircuitParams, x, z, method: str = "reflection") -> np.ndarray:
    return measure_probs(apply_circuit(params, x, z, method))


def fast_probs(params: CircuitParams, x, z) -> np.ndarray:
    """Closed-form class probabilities ``(P0, P1, P2, P3)`` without building the register."""
    u = _check_point(params, x, z)
    return _kernels.class_probs(params.a, params.b, params.gamma, u[None, :])[0]


def fast_probs_batch(params: CircuitParams, U) -> np.ndarray:
    """Class probabilities at every row of ``U`` (shape ``(m, N + d)``)."""
    U = np.ascontiguousarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != params.dim:
        raise InvalidArgument(f"expected points of shape (m, {params.dim})")
    return _kernels.class_probs(params.a, params.b, params.gamma, U)


def unitarity_error(M: np.ndarray) -> float:
    """Largest entrywise deviation of ``M M^dag`` and ``M^dag M`` from the identity."""
    eye = np.eye(M.shape[0])
    return float(max(np.max(np.abs(M @ M.conj().T - eye)),
                     np.max(np.abs(M.conj().T @ M - eye))))
