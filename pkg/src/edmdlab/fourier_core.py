"""Finite Fourier representations of periodic functions and weighted norms.

Coefficients are stored in signed order ``-K+1, ..., K-1`` and follow the
``(1/2pi) int e^{-ikx} f(x) dx`` convention, so a probability density on the
circle has ``c_0 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "AliasingError",
    "FourierVector",
    "BeurlingWeight",
    "WeightedMatrix",
    "SingularValueError",
    "grid",
    "dft_coeffs",
    "dirichlet_project",
    "weighted_norm",
    "weighted_operator_norm",
    "toeplitz_section",
]


class AliasingError(ValueError):
    """Quadrature grid too coarse for the requested number of modes."""


class SingularValueError(RuntimeError):
    """Power iteration for the top singular value failed to converge."""

    def __init__(self, iterations, delta):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last relative change {delta:.3e})"
        )
        self.iterations = iterations


def grid(n):
    """Uniform periodic grid ``2*pi*j/n``, ``j = 0..n-1``."""
    return 2.0 * np.pi * np.arange(n) / n


def _signed(order):
    return np.arange(-order + 1, order)


@dataclass(frozen=True, eq=False)
class FourierVector:
    """Trigonometric polynomial of degree < ``order``.

    ``coeffs[k + order - 1]`` is the coefficient of ``e^{ikx}``.
    """

    coeffs: np.ndarray
    order: int

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if self.order < 1:
            raise ValueError("order must be a positive integer")
        if c.shape != (2 * self.order - 1,):
            raise ValueError(
                f"expected {2 * self.order - 1} coefficients for order {self.order}, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, order):
        return cls(np.zeros(2 * order - 1, dtype=complex), order)

    @classmethod
    def basis(cls, k, order):
        """The exponential ``e_k`` as a vector of the given order."""
        if abs(k) >= order:
            raise IndexError(f"mode {k} outside order {order}")
        c = np.zeros(2 * order - 1, dtype=complex)
        c[k + order - 1] = 1.0
        return cls(c, order)

    @classmethod
    def from_function(cls, func, order, n=None):
        """Fourier coefficients of a periodic callable by trapezoidal quadrature."""
        n = n or max(4 * order, 256)
        return dft_coeffs(func(grid(n)), order)

    @classmethod
    def from_trig(cls, order, cos=(), sin=(), const=0.0):
        """Build ``const + sum_m cos[m-1] cos(mx) + sin[m-1] sin(mx)``."""
        c = np.zeros(2 * order - 1, dtype=complex)
        c[order - 1] = const
        for m, a in enumerate(cos, start=1):
            if a and m >= order:
                raise ValueError(f"cos({m}x) does not fit in order {order}")
            if a:
                c[order - 1 + m] += a / 2
                c[order - 1 - m] += a / 2
        for m, b in enumerate(sin, start=1):
            if b and m >= order:
                raise ValueError(f"sin({m}x) does not fit in order {order}")
            if b:
                c[order - 1 + m] += b / 2j
                c[order - 1 - m] -= b / 2j
        return cls(c, order)

    @property
    def indices(self):
        return _signed(self.order)

    def __getitem__(self, k):
        if abs(k) >= self.order:
            return 0j
        return self.coeffs[k + self.order - 1]

    def __len__(self):
        return self.coeffs.size

    def __add__(self, other):
        n = max(self.order, other.order)
        return FourierVector(self.resize(n).coeffs + other.resize(n).coeffs, n)

    def __sub__(self, other):
        n = max(self.order, other.order)
        return FourierVector(self.resize(n).coeffs - other.resize(n).coeffs, n)

    def __mul__(self, scalar):
        return FourierVector(self.coeffs * scalar, self.order)

    __rmul__ = __mul__

    def resize(self, order):
        """Zero-pad or truncate to a new order."""
        if order == self.order:
            return self
        out = np.zeros(2 * order - 1, dtype=complex)
        m = min(order, self.order)
        out[order - m : order + m - 1] = self.coeffs[self.order - m : self.order + m - 1]
        return FourierVector(out, order)

    def evaluate(self, x):
        """Evaluate at real (or complex) points."""
        x = np.asarray(x)
        return np.exp(1j * np.multiply.outer(x, self.indices)) @ self.coeffs

    def on_grid(self, n):
        """Values on the uniform n-point grid via inverse FFT."""
        if n < 2 * self.order - 1:
            raise AliasingError(f"grid of {n} points cannot carry order {self.order}")
        buf = np.zeros(n, dtype=complex)
        buf[self.indices % n] = self.coeffs
        return np.fft.ifft(buf) * n

    def conj_reflect(self):
        """Coefficients of the complex conjugate function: ``c_k -> conj(c_{-k})``."""
        return FourierVector(np.conj(self.coeffs[::-1]), self.order)

    def is_real(self, tol=1e-12):
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))) <= tol * scale)

    def real_part(self):
        """Coefficients of ``Re f``."""
        return FourierVector(0.5 * (self.coeffs + np.conj(self.coeffs[::-1])), self.order)


@dataclass(frozen=True)
class BeurlingWeight:
    """Weight ``k -> sigma(k)`` defining the space ``W^sigma``.

    ``kind`` is one of ``hardy``, ``sobolev``, ``flat`` or ``custom``; ``param``
    is the strip half-width t for ``hardy`` and the order r for ``sobolev``.
    ``inverted`` selects the reciprocal weight ``1/sigma`` (the dual space).
    """

    kind: str = "flat"
    param: float = 0.0
    inverted: bool = False
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("hardy", "sobolev", "flat", "custom"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom weight needs func")

    @classmethod
    def hardy(cls, t):
        if t < 0:
            raise ValueError("strip parameter must be non-negative")
        return cls("hardy", float(t))

    @classmethod
    def sobolev(cls, r):
        return cls("sobolev", float(r))

    @classmethod
    def flat(cls):
        return cls("flat")

    @classmethod
    def custom(cls, func):
        return cls("custom", func=func)

    def reciprocal(self):
        return BeurlingWeight(self.kind, self.param, not self.inverted, self.func)

    def log_eval(self, k):
        """Natural log of the weight; avoids overflow of cosh for large k."""
        k = np.abs(np.asarray(k, dtype=float))
        if self.kind == "hardy":
            a = 2.0 * k * self.param
            # log sqrt(cosh a) = a/2 + log((1 + e^{-2a})/2)/2
            out = 0.5 * a + 0.5 * np.log1p(np.exp(-2.0 * a)) - 0.5 * np.log(2.0)
        elif self.kind == "sobolev":
            out = 0.5 * self.param * np.log1p(k * k)
        elif self.kind == "flat":
            out = np.zeros_like(k)
        else:
            out = np.log(np.asarray(self.func(k), dtype=float))
        return -out if self.inverted else out

    def __call__(self, k):
        if self.kind == "hardy":
            a = 2.0 * np.abs(np.asarray(k, dtype=float)) * self.param
            with np.errstate(over="ignore"):
                direct = np.sqrt(np.cosh(a))
            out = np.where(a < 700.0, direct, np.exp(np.abs(self.log_eval(k))))
            return 1.0 / out if self.inverted else out
        return np.exp(self.log_eval(k))


@dataclass(frozen=True, eq=False)
class WeightedMatrix:
    """Finite section of an operator over the signed index range of ``order``.

    ``entries[i, j]`` maps mode ``indices[j]`` to mode ``indices[i]``.
    """

    entries: np.ndarray
    order: int
    row_weight: BeurlingWeight = BeurlingWeight()
    col_weight: BeurlingWeight = BeurlingWeight()

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        d = 2 * self.order - 1
        if a.shape != (d, d):
            raise ValueError(f"expected {d}x{d} matrix for order {self.order}, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def indices(self):
        return _signed(self.order)

    def apply(self, v):
        """Apply to a FourierVector (zero-padded or truncated to this order)."""
        return FourierVector(self.entries @ v.resize(self.order).coeffs, self.order)

    def block(self, order):
        """Central sub-block over modes ``|k| < order``."""
        if order > self.order:
            raise ValueError("block larger than section")
        s = slice(self.order - order, self.order + order - 1)
        return WeightedMatrix(self.entries[s, s], order, self.row_weight, self.col_weight)

    @property
    def shape(self):
        return self.entries.shape


def dft_coeffs(samples, K):
    """Fourier coefficients ``c_k``, ``|k| < K``, from samples on a uniform grid.

    Uses the trapezoidal rule, which is spectrally accurate for analytic
    periodic integrands.

    Raises
    ------
    AliasingError
        If fewer than ``4K`` samples are given.
    ValueError
        If any sample is not finite.
    """
    samples = np.asarray(samples)
    n = samples.shape[-1]
    if K < 1:
        raise ValueError("order must be positive")
    if n < 4 * K:
        raise AliasingError(f"{n} samples cannot resolve order {K} (need at least {4 * K})")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples contain non-finite values")
    c = np.fft.fft(samples) / n
    return FourierVector(c[_signed(K) % n], K)


def dirichlet_project(v, K):
    """Zero all modes with ``|k| >= K``, keeping the order of ``v``."""
    if K > v.order:
        raise ValueError(f"cannot project order {v.order} vector to larger order {K}")
    c = np.array(v.coeffs)
    c[np.abs(v.indices) >= K] = 0.0
    return FourierVector(c, v.order)


def weighted_norm(v, w):
    """``sqrt(sum_k w(k)^2 |c_k|^2)``."""
    return float(np.sqrt(np.sum(np.exp(2.0 * w.log_eval(v.indices)) * np.abs(v.coeffs) ** 2)))


def _power_top_singular(a, tol, maxiter):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.shape[1]) + 1j * rng.standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    s_old = 0.0
    for it in range(1, maxiter + 1):
        y = a.conj().T @ (a @ x)
        s2 = np.linalg.norm(y)
        if s2 == 0.0:
            return 0.0
        x = y / s2
        s = np.sqrt(s2)
        delta = abs(s - s_old) / s
        if delta <= tol:
            return float(s)
        s_old = s
    raise SingularValueError(maxiter, delta)


def weighted_operator_norm(m, domain=None, codomain=None, method="auto", tol=1e-12, maxiter=100_000):
    """Norm of a finite section from ``W^domain`` to ``W^codomain``.

    Computes the top singular value of ``diag(codomain) @ M @ diag(domain)^-1``.
    ``method`` is ``"svd"``, ``"power"`` (power iteration on ``A^H A``) or
    ``"auto"``, which uses a full SVD for sections up to 1024 modes.
    """
    domain = domain or m.col_weight
    codomain = codomain or m.row_weight
    idx = m.indices
    row = codomain.log_eval(idx)
    col = domain.log_eval(idx)
    a = np.exp(row)[:, None] * m.entries * np.exp(-col)[None, :]
    if method == "auto":
        method = "svd" if min(a.shape) <= 1024 else "power"
    if method == "svd":
        return float(np.linalg.norm(a, 2))
    if method == "power":
        return _power_top_singular(a, tol, maxiter)
    raise ValueError(f"unknown method {method!r}")


def toeplitz_section(v, order):
    """Toeplitz matrix ``T_{jk} = v_{j-k}`` over ``|j|, |k| < order``.

    This is the finite section of multiplication by the function ``v``; it
    needs coefficients up to lag ``2*order - 2``, missing ones are zero.
    """
    d = 2 * order - 1
    vals = v.resize(d).coeffs
    i = np.arange(d)
    return vals[(i[:, None] - i[None, :]) + d - 1]
