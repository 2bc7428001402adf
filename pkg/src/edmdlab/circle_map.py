"""Analytic expanding circle maps, sampling, and Fourier transfer matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .fourier_core import FourierVector, WeightedMatrix, grid, toeplitz_section

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

__all__ = [
    "NotExpandingError",
    "QuadratureError",
    "DensityError",
    "ExpandingMap",
    "DensitySpec",
    "fig1_map",
    "doubling_map",
    "evaluate",
    "inverse_branches",
    "trajectory",
    "trajectories",
    "sample_iid",
    "transfer_matrix",
    "transfer_matrix_conjugated",
    "transfer_apply_pointwise",
    "invariant_density",
    "quadrature_matrix",
]

TWO_PI = 2.0 * np.pi
CERT_GRID = 2**14


class NotExpandingError(ValueError):
    """Map fails the expansivity certificate."""


class QuadratureError(RuntimeError):
    """Grid refinement did not settle the quadrature."""


class DensityError(ValueError):
    """Density is not positive, not real, or not normalized."""


@dataclass(frozen=True, eq=False)
class ExpandingMap:
    """Circle map with lift ``x -> degree*x + p(x)``.

    ``p`` is a real trigonometric polynomial given by its cosine and sine
    coefficient lists (``cos[m-1]`` multiplies ``cos(mx)``). Construction
    certifies ``min f' > 1`` on a fine grid and records the expansion bounds
    ``gamma`` (min f'), ``gamma_max`` (max f') and ``kappa = 1/gamma``.
    """

    degree: int
    cos: tuple = ()
    sin: tuple = ()
    const: float = 0.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 2:
            raise NotExpandingError(
                f"degree must be an integer >= 2 (orientation-preserving); got {self.degree}"
            )
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "cos", tuple(float(a) for a in self.cos))
        object.__setattr__(self, "sin", tuple(float(b) for b in self.sin))
        m = max(len(self.cos), len(self.sin))
        a = np.zeros(m)
        b = np.zeros(m)
        a[: len(self.cos)] = self.cos
        b[: len(self.sin)] = self.sin
        keep = (a != 0) | (b != 0)
        object.__setattr__(self, "_m", np.arange(1, m + 1, dtype=float)[keep])
        object.__setattr__(self, "_a", a[keep])
        object.__setattr__(self, "_b", b[keep])
        d = self.derivative(grid(CERT_GRID))
        gmin, gmax = float(d.min()), float(d.max())
        if gmin <= 1.0:
            raise NotExpandingError(f"map is not expanding: min |f'| = {gmin:.6g} <= 1")
        object.__setattr__(self, "gamma", gmin)
        object.__setattr__(self, "gamma_max", gmax)
        object.__setattr__(self, "kappa", 1.0 / gmin)

    @property
    def perturbation(self):
        """The periodic part ``p`` as a FourierVector."""
        order = int(self._m.max()) + 1 if self._m.size else 1
        return FourierVector.from_trig(order, cos=self.cos, sin=self.sin, const=self.const)

    @property
    def bandwidth(self):
        """Largest harmonic in ``p``."""
        return int(self._m.max()) if self._m.size else 0

    def periodic_part(self, x):
        mx = np.multiply.outer(x, self._m)
        return self.const + np.cos(mx) @ self._a + np.sin(mx) @ self._b

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return self.degree * x + self.periodic_part(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        mx = np.multiply.outer(x, self._m)
        return self.degree + np.cos(mx) @ (self._m * self._b) - np.sin(mx) @ (self._m * self._a)

    def __call__(self, x):
        return np.mod(self.lift(x), TWO_PI)

    def to_dict(self):
        return {"degree": self.degree, "cos": list(self.cos), "sin": list(self.sin), "const": self.const}


def fig1_map():
    """``f(x) = 4x - 0.4 sin 6x + 0.08 cos 3x``."""
    return ExpandingMap(4, cos=(0, 0, 0.08), sin=(0, 0, 0, 0, 0, -0.4))


def doubling_map():
    return ExpandingMap(2)


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """Positive analytic probability density ``h`` with ``c_0 = 1``.

    ``m_low``/``m_high`` are lower/upper bounds of ``h`` on the certification
    grid.
    """

    coeffs: FourierVector
    m_low: float
    m_high: float

    @classmethod
    def from_coeffs(cls, coeffs, tol=1e-10):
        if not coeffs.is_real(tol):
            raise DensityError("density coefficients are not conjugate-symmetric")
        if abs(coeffs[0] - 1.0) > tol:
            raise DensityError(f"density not normalized: c_0 = {coeffs[0]}")
        c = coeffs.real_part()
        c = FourierVector(np.where(c.indices == 0, 1.0, c.coeffs), c.order)
        vals = c.on_grid(max(CERT_GRID, 8 * c.order)).real
        lo, hi = float(vals.min()), float(vals.max())
        if lo <= 0.0:
            raise DensityError(f"density is not positive: min h = {lo:.6g}")
        return cls(c, lo, hi)

    @classmethod
    def uniform(cls):
        return cls.from_coeffs(FourierVector(np.ones(1), 1))

    @classmethod
    def from_trig(cls, cos=(), sin=()):
        """``1 + sum cos[m-1] cos(mx) + sin[m-1] sin(mx)``."""
        order = max(len(cos), len(sin)) + 1
        return cls.from_coeffs(FourierVector.from_trig(order, cos=cos, sin=sin, const=1.0))

    @property
    def order(self):
        return self.coeffs.order

    @property
    def is_uniform(self):
        return bool(np.all(self.coeffs.coeffs[self.coeffs.indices != 0] == 0))

    def __call__(self, x):
        return self.coeffs.evaluate(x).real

    def on_grid(self, n):
        return self.coeffs.on_grid(n).real

    def to_dict(self):
        k = np.arange(1, self.order)
        c = np.array([self.coeffs[int(i)] for i in k])
        return {"cos": list(2 * c.real), "sin": list(-2 * c.imag)}


def evaluate(fmap, x):
    """``f(x) = lift(x) mod 2pi``."""
    return fmap(x)


def inverse_branches(fmap, y, tol=1e-13, maxiter=100):
    """All ``degree`` preimages of ``y`` in ``[0, 2pi)``, sorted ascending.

    Safeguarded Newton on the monotone lift, with bisection whenever a Newton
    step leaves the current bracket. Accepts scalar or array ``y``; array
    input returns shape ``y.shape + (degree,)``.
    """
    y = np.mod(np.asarray(y, dtype=float), TWO_PI)
    w = fmap.degree
    f0 = float(fmap.lift(0.0))
    # targets Y = y + 2pi m in [f0, f0 + 2pi w)
    m0 = np.ceil((f0 - y) / TWO_PI)
    targets = (y + TWO_PI * m0)[..., None] + TWO_PI * np.arange(w)
    lo = np.zeros_like(targets)
    hi = np.full_like(targets, TWO_PI)
    x = np.clip((targets - fmap.const) / w, 0.0, TWO_PI)
    for _ in range(maxiter):
        r = fmap.lift(x) - targets
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        step = r / fmap.derivative(x)
        xn = x - step
        bad = (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        if np.all(np.abs(xn - x) <= tol * TWO_PI):
            x = xn
            break
        x = xn
    else:
        raise NotExpandingError("inverse branch iteration did not converge; map miscertified?")
    # one polishing step brings the residual to roundoff level
    x = x - (fmap.lift(x) - targets) / fmap.derivative(x)
    res = np.abs(fmap.lift(x) - targets)
    if np.any(res > 1e-11):
        raise NotExpandingError(f"inverse branch residual {res.max():.3e} too large")
    return np.sort(np.mod(x, TWO_PI), axis=-1)


def _iterate_py(x0, n, burn, w, const, m, a, b):
    out = np.empty((x0.size, n))
    x = x0.copy()
    for i in range(burn + n):
        if i >= burn:
            out[:, i - burn] = x
        mx = np.multiply.outer(x, m)
        x = np.mod(w * x + const + np.cos(mx) @ a + np.sin(mx) @ b, TWO_PI)
    return out


if numba is not None:

    @numba.njit(cache=True)
    def _iterate_nb(x0, n, burn, w, const, m, a, b):  # pragma: no cover - compiled
        out = np.empty((x0.size, n))
        two_pi = 2.0 * np.pi
        for s in range(x0.size):
            x = x0[s]
            for i in range(burn + n):
                if i >= burn:
                    out[s, i - burn] = x
                y = w * x + const
                for q in range(m.size):
                    y += a[q] * np.cos(m[q] * x) + b[q] * np.sin(m[q] * x)
                x = y % two_pi
        return out

    _iterate = _iterate_nb
else:  # pragma: no cover
    _iterate = _iterate_py


def trajectories(fmap, x0, n, burn_in=0):
    """Orbits from several starting points; returns shape ``(len(x0), n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = np.mod(np.atleast_1d(np.asarray(x0, dtype=float)), TWO_PI)
    return _iterate(x0, int(n), int(burn_in), float(fmap.degree), float(fmap.const), fmap._m, fmap._a, fmap._b)


def trajectory(fmap, x0, n, burn_in=0, seed=None):
    """Orbit ``x_burn_in, ..., x_{burn_in+n-1}`` of ``x_{k+1} = f(x_k)``.

    With a ``seed``, a jitter of at most 1e-13 is added to ``x0`` so that
    repeated runs from the same nominal point decorrelate; ``seed=None``
    iterates ``x0`` exactly.
    """
    if seed is not None:
        x0 = x0 + np.random.default_rng(seed).uniform(-1e-13, 1e-13)
    return trajectories(fmap, [x0], n, burn_in)[0]


def sample_iid(h, n, seed, table=2**12):
    """``n`` independent draws from the density ``h/(2pi)`` on ``[0, 2pi)``.

    Inverse-CDF sampling: the CDF is tabulated exactly from the Fourier
    coefficients, inverted by linear interpolation, then refined by a single
    Newton step.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, size=n)
    if h.is_uniform:
        return TWO_PI * u
    k = np.arange(1, h.order)
    ck = np.array([h.coeffs[int(i)] for i in k])

    def cdf(x):
        x = np.asarray(x, dtype=float)
        z = np.exp(1j * x)
        acc = np.zeros_like(z)
        # Horner in z for sum_k c_k (z^k - 1)/(ik)
        for kk, c in zip(k[::-1], ck[::-1]):
            acc = acc * z + c / (1j * kk)
        acc = acc * z - np.sum(ck / (1j * k))
        return x / TWO_PI + (2.0 * acc.real) / TWO_PI

    def dens(x):
        z = np.exp(1j * np.asarray(x, dtype=float))
        acc = np.zeros_like(z)
        for c in ck[::-1]:
            acc = acc * z + c
        return 1.0 + 2.0 * (acc * z).real

    xt = np.linspace(0.0, TWO_PI, table + 1)
    ft = cdf(xt)
    ft[0], ft[-1] = 0.0, 1.0
    x = np.interp(u, ft, xt)
    x = x - (cdf(x) - u) / (dens(x) / TWO_PI)
    return np.mod(x, TWO_PI)


def _grid_guess(fmap, K, weight_order=1):
    spread = sum(m * (abs(a) + abs(b)) for m, a, b in zip(fmap._m, fmap._a, fmap._b))
    band = fmap.degree * K + K + 2.0 * spread * K + 8 * fmap.bandwidth + 4 * weight_order
    return int(2 ** np.ceil(np.log2(max(2 * band, 4 * K, 1024))))


def quadrature_matrix(phase, weight, K, n, chunk=64):
    """``Q_{jk} = (1/n) sum_y exp(-i j phase(y)) weight(y) exp(i k y)``.

    ``phase`` and ``weight`` are samples on the uniform n-point grid; rows
    and columns run over the signed modes ``|j|, |k| < K``.
    """
    d = 2 * K - 1
    idx = np.arange(-K + 1, K)
    out = np.empty((d, d), dtype=complex)
    cols = idx % n
    for s in range(0, d, chunk):
        j = idx[s : s + chunk]
        g = np.exp(-1j * np.multiply.outer(j, phase)) * weight
        out[s : s + chunk] = np.fft.ifft(g, axis=1)[:, cols]
    return out


def _chop(a, scale):
    a = a.copy()
    a.real[np.abs(a.real) < 4e-16 * scale] = 0.0
    a.imag[np.abs(a.imag) < 4e-16 * scale] = 0.0
    return a


def _settled_quadrature(build, n0, max_n=2**18, tol=1e-10):
    n = n0
    prev = build(n)
    while True:
        n *= 2
        if n > max_n:
            raise QuadratureError(f"quadrature did not settle to {tol:g} by n = {max_n}")
        cur = build(n)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur, n
        prev = cur


def transfer_matrix(fmap, h, K, n=None, check=True):
    """Fourier finite section of the transfer operator ``L_mu``.

    Entry ``(j, k)`` is ``(1/2pi) int e^{-ij f(y)} [h(y)/h(f(y))] e^{iky} dy``,
    the Lebesgue matrix element of ``L_mu`` obtained by changing variables in
    ``int e_j^* L_mu e_k``; for ``h = 1`` it is the Perron-Frobenius matrix.
    The grid is doubled until entries move by at most 1e-10.
    """
    if K < 1:
        raise ValueError("order must be positive")
    uniform = h is None or h.is_uniform

    def build(nn):
        y = grid(nn)
        fy = fmap.lift(y)
        if uniform:
            wgt = np.ones(nn)
        else:
            wgt = h.on_grid(nn) / h(np.mod(fy, TWO_PI))
        return _chop(quadrature_matrix(fy, wgt, K, nn), float(np.max(np.abs(wgt))))

    h_order = 1 if uniform else h.order
    if n is not None:
        a = build(n)
    elif check:
        a, n = _settled_quadrature(build, _grid_guess(fmap, K, h_order))
    else:
        a = build(_grid_guess(fmap, K, h_order))
    return WeightedMatrix(a, K)


def transfer_matrix_conjugated(fmap, h, K):
    """``L_mu`` as ``T(1/h) L_1 T(h)`` from Toeplitz sections of ``h`` and ``1/h``.

    Only accurate away from the section boundary; kept as an independent
    route to cross-check :func:`transfer_matrix`.
    """
    l1 = transfer_matrix(fmap, None, K).entries
    if h is None or h.is_uniform:
        return WeightedMatrix(l1, K)
    n = max(CERT_GRID, 8 * max(K, h.order))
    from .fourier_core import dft_coeffs

    inv = dft_coeffs(1.0 / h.on_grid(n), 2 * K)
    return WeightedMatrix(toeplitz_section(inv, K) @ l1 @ toeplitz_section(h.coeffs, K), K)


def transfer_apply_pointwise(fmap, h, phi, y):
    """``(L_mu phi)(y)`` by the explicit inverse-branch sum."""
    xs = inverse_branches(fmap, y)
    jac = 1.0 / fmap.derivative(xs)
    if h is None or h.is_uniform:
        return np.sum(jac * phi(xs), axis=-1)
    return np.sum(jac * h(xs) * phi(xs), axis=-1) / h(np.asarray(y))


def invariant_density(fmap, K, gap_tol=1e-8, residual_tol=1e-8):
    """Physical invariant density from the leading eigenvector of ``L_1``.

    Raises
    ------
    DensityError
        If the leading eigenvalue is not simple or the density is not positive.
    """
    lmat = transfer_matrix(fmap, None, K).entries
    vals, vecs = linalg.eig(lmat)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if vals.size > 1 and abs(vals[0]) - abs(vals[1]) < gap_tol:
        raise DensityError(f"leading eigenvalue not simple: |l0| - |l1| = {abs(vals[0]) - abs(vals[1]):.3e}")
    v = vecs[:, 0] / vecs[K - 1, 0]
    c = FourierVector(v, K).real_part()
    c = FourierVector(np.where(c.indices == 0, 1.0, c.coeffs), K)
    res = np.linalg.norm(lmat @ c.coeffs - c.coeffs)
    if res > residual_tol:
        raise DensityError(f"invariant density residual {res:.3e} exceeds {residual_tol:g}")
    return DensitySpec.from_coeffs(c)
