"""Target functions with analytic Fourier descriptors.

Fourier convention: ``fhat(xi) = int exp(-2 pi i u . xi) f(u) du``.

The sampler draws frequencies from the measure ``|Re fhat| + |Im fhat|``
(normalised). Its total mass is :attr:`TargetFunction.mass`, which equals
``||fhat||_1`` whenever ``fhat`` is real or purely imaginary. ``moment`` and
``coord_moments`` integrate against the same measure.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import InvalidArgument


def _points(U, dim: int) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != dim:
        raise InvalidArgument(f"expected points with {dim} coordinates, got {U.shape[1]}")
    return U


class TargetFunction:
    """Interface shared by the built-in targets.

    Subclasses provide ``evaluate``, ``grad``, ``fhat``, the masses of the
    real and imaginary parts, the moments, and samplers for the two
    normalised densities ``|Re fhat| / int |Re fhat|`` and
    ``|Im fhat| / int |Im fhat|``.
    """

    dim: int

    def evaluate(self, U) -> np.ndarray:
        raise NotImplementedError

    def grad(self, U) -> np.ndarray:
        raise NotImplementedError

    def fhat(self, xi) -> np.ndarray:
        raise NotImplementedError

    # masses of |Re fhat| and |Im fhat|
    re_mass: float
    im_mass: float

    @property
    def fhat_l1(self) -> float:
        raise NotImplementedError

    @property
    def mass(self) -> float:
        return self.re_mass + self.im_mass

    @property
    def p_real(self) -> float:
        return self.re_mass / self.mass if self.mass > 0 else 1.0

    def moment(self, q: float) -> float:
        raise NotImplementedError

    def coord_moments(self) -> np.ndarray:
        """``int xi_i^2 (|Re fhat| + |Im fhat|) dxi`` for each coordinate."""
        raise NotImplementedError

    def sample_re(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample_im(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sign_re(self, xi) -> np.ndarray:
        return np.sign(self.fhat(xi).real)

    def sign_im(self, xi) -> np.ndarray:
        return np.sign(self.fhat(xi).imag)

    def __call__(self, U) -> np.ndarray:
        return self.evaluate(U)


class _GaussianBase(TargetFunction):
    def __init__(self, amplitude: float, width: float, dim: int):
        if width <= 0:
            raise InvalidArgument("width must be positive")
        if dim < 1:
            raise InvalidArgument("dim must be >= 1")
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.dim = int(dim)

    @property
    def s2(self) -> float:
        """Per-coordinate variance of the Gaussian frequency density."""
        return 1.0 / (2.0 * np.pi * self.width ** 2)

    @property
    def fhat_l1(self) -> float:
        return abs(self.amplitude)

    def _envelope(self, V) -> np.ndarray:
        return np.exp(-np.pi * np.sum(V * V, axis=1) / self.width ** 2)

    def _gauss_hat(self, xi) -> np.ndarray:
        return self.width ** self.dim * np.exp(-np.pi * self.width ** 2 * np.sum(xi * xi, axis=-1))

    def _normal(self, rng, size):
        return np.sqrt(self.s2) * rng.standard_normal((size, self.dim))


class Gaussian(_GaussianBase):
    """``A exp(-pi ||u||^2 / sigma^2)``; real nonnegative (for ``A > 0``) transform."""

    def __init__(self, amplitude: float = 1.0, width: float = 1.0, dim: int = 1):
        super().__init__(amplitude, width, dim)
        self.re_mass = abs(self.amplitude)
        self.im_mass = 0.0

    def evaluate(self, U):
        U = _points(U, self.dim)
        return self.amplitude * self._envelope(U)

    def grad(self, U):
        U = _points(U, self.dim)
        return (-2.0 * np.pi / self.width ** 2) * U * self.evaluate(U)[:, None]

    def fhat(self, xi):
        return (self.amplitude * self._gauss_hat(np.atleast_2d(xi))).astype(complex)

    def moment(self, q):
        D, s2, A = self.dim, self.s2, abs(self.amplitude)
        if q == 2:
            return A * D * s2
        if q == 4:
            return A * s2 ** 2 * (D * D + 2 * D)
        raise InvalidArgument("Gaussian declares moments q in {2, 4}")

    def coord_moments(self):
        return np.full(self.dim, abs(self.amplitude) * self.s2)

    def sample_re(self, rng, size):
        return self._normal(rng, size)

    # Im fhat vanishes: any probability measure will do
    sample_im = sample_re

    def sign_re(self, xi):
        return np.full(np.atleast_2d(xi).shape[0], np.sign(self.amplitude))

    def sign_im(self, xi):
        return np.zeros(np.atleast_2d(xi).shape[0])


class GaussianCosine(_GaussianBase):
    """``A exp(-pi ||u||^2 / sigma^2) cos(2 pi omega . u)``; transform is two real Gaussian bumps."""

    def __init__(self, amplitude: float, width: float, frequency):
        frequency = np.atleast_1d(np.asarray(frequency, dtype=float))
        super().__init__(amplitude, width, frequency.size)
        self.frequency = frequency
        self.re_mass = abs(self.amplitude)
        self.im_mass = 0.0

    def evaluate(self, U):
        U = _points(U, self.dim)
        return self.amplitude * self._envelope(U) * np.cos(2 * np.pi * U @ self.frequency)

    def grad(self, U):
        U = _points(U, self.dim)
        env = self.amplitude * self._envelope(U)
        ph = 2 * np.pi * U @ self.frequency
        return env[:, None] * ((-2 * np.pi / self.width ** 2) * U * np.cos(ph)[:, None]
                               - 2 * np.pi * np.sin(ph)[:, None] * self.frequency)

    def fhat(self, xi):
        xi = np.atleast_2d(xi)
        w = self.frequency
        return (0.5 * self.amplitude * (self._gauss_hat(xi - w) + self._gauss_hat(xi + w))).astype(complex)

    def moment(self, q):
        D, s2, A = self.dim, self.s2, abs(self.amplitude)
        w2 = float(self.frequency @ self.frequency)
        if q == 2:
            return A * (D * s2 + w2)
        if q == 4:
            # E||xi||^4 for xi ~ N(w, s2 I): mean^2 + variance of the noncentral chi-square
            return A * ((D * s2 + w2) ** 2 + 2 * D * s2 ** 2 + 4 * s2 * w2)
        raise InvalidArgument("GaussianCosine declares moments q in {2, 4}")

    def coord_moments(self):
        return abs(self.amplitude) * (self.s2 + self.frequency ** 2)

    def sample_re(self, rng, size):
        side = np.where(rng.random(size) < 0.5, 1.0, -1.0)
        return side[:, None] * self.frequency + self._normal(rng, size)

    sample_im = sample_re

    def sign_re(self, xi):
        return np.full(np.atleast_2d(xi).shape[0], np.sign(self.amplitude))

    def sign_im(self, xi):
        return np.zeros(np.atleast_2d(xi).shape[0])


class ShiftedGaussian(_GaussianBase):
    """``A exp(-pi ||u - c||^2 / sigma^2)``; complex transform ``A sigma^D g(xi) e^{-2 pi i c.xi}``.

    Both real and imaginary parts change sign, so this target exercises the
    imaginary branch of the sampler. One-dimensional integrals along ``c``
    give the masses and moments.
    """

    def __init__(self, amplitude: float, width: float, center):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(amplitude, width, center.size)
        cn = float(np.linalg.norm(center))
        if cn == 0.0:
            raise InvalidArgument("center must be nonzero; use Gaussian for a centred bump")
        self.center = center
        self._cnorm = cn
        self.re_mass = abs(self.amplitude) * self._t_moment(0, "re")
        self.im_mass = abs(self.amplitude) * self._t_moment(0, "im")

    def _t_moment(self, k: int, part: str) -> float:
        """``E[t^k h(t)]`` with ``t ~ N(0, s2)`` and ``h = |cos|``, ``|sin|`` of ``2 pi |c| t``."""
        s = np.sqrt(self.s2)
        f = np.cos if part == "re" else np.sin
        om = 2 * np.pi * self._cnorm

        def integrand(t):
            return t ** k * abs(f(om * t)) * np.exp(-0.5 * t * t / self.s2) / (s * np.sqrt(2 * np.pi))

        # split at the kinks of |cos| / |sin| for an accurate quadrature
        hi = 12.0 * s
        period = np.pi / om
        offset = 0.5 * period if part == "re" else 0.0
        kinks = offset + period * np.arange(np.floor(-hi / period) - 1, np.ceil(hi / period) + 2)
        edges = np.unique(np.clip(np.r_[-hi, kinks, hi], -hi, hi))
        total = 0.0
        for lo_, hi_ in zip(edges[:-1], edges[1:]):
            if hi_ > lo_:
                total += integrate.quad(integrand, lo_, hi_, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        return total

    @cached_property
    def _h(self) -> tuple[float, float, float]:
        return tuple(self._t_moment(k, "re") + self._t_moment(k, "im") for k in (0, 2, 4))

    def evaluate(self, U):
        U = _points(U, self.dim)
        return self.amplitude * self._envelope(U - self.center)

    def grad(self, U):
        U = _points(U, self.dim)
        return (-2.0 * np.pi / self.width ** 2) * (U - self.center) * self.evaluate(U)[:, None]

    def fhat(self, xi):
        xi = np.atleast_2d(xi)
        return self.amplitude * self._gauss_hat(xi) * np.exp(-2j * np.pi * xi @ self.center)

    def moment(self, q):
        h0, h2, h4 = self._h
        D, s2, A = self.dim, self.s2, abs(self.amplitude)
        if q == 2:
            return A * (h2 + (D - 1) * s2 * h0)
        if q == 4:
            return A * (h4 + 2 * (D - 1) * s2 * h2 + s2 ** 2 * ((D - 1) ** 2 + 2 * (D - 1)) * h0)
        raise InvalidArgument("ShiftedGaussian declares moments q in {2, 4}")

    def coord_moments(self):
        h0, h2, _ = self._h
        c2 = (self.center / self._cnorm) ** 2
        return abs(self.amplitude) * (c2 * h2 + self.s2 * (1 - c2) * h0)

    def _rejection(self, rng, size, f):
        out = np.empty((size, self.dim))
        filled = 0
        while filled < size:
            batch = max(2 * (size - filled), 16)
            xi = self._normal(rng, batch)
            keep = xi[rng.random(batch) < np.abs(f(2 * np.pi * xi @ self.center))]
            take = min(size - filled, keep.shape[0])
            out[filled:filled + take] = keep[:take]
            filled += take
        return out

    def sample_re(self, rng, size):
        return self._rejection(rng, size, np.cos)

    def sample_im(self, rng, size):
        return self._rejection(rng, size, np.sin)

    def sign_re(self, xi):
        return np.sign(self.amplitude) * np.sign(np.cos(2 * np.pi * np.atleast_2d(xi) @ self.center))

    def sign_im(self, xi):
        return -np.sign(self.amplitude) * np.sign(np.sin(2 * np.pi * np.atleast_2d(xi) @ self.center))


def make_target(kind: str, **kw) -> TargetFunction:
    """Build a target from a config-style description (``gaussian``, ``shifted``, ``cosine``)."""
    kinds = {"gaussian": Gaussian, "shifted": ShiftedGaussian, "cosine": GaussianCosine}
    try:
        return kinds[kind](**kw)
    except KeyError:
        raise InvalidArgument(f"unknown target kind {kind!r}") from None
