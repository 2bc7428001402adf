"""Orthonormal polynomials of a positive density on the circle.

The multiplication operator ``M phi = h phi`` is Toeplitz in the Fourier
basis. Ordering the modes as ``0, -1, 1, -2, 2, ...`` makes its Cholesky
factor ``V`` lower triangular with an exactly computable finite section; the
columns of ``U = V^{-H}`` are the coefficient vectors of the L2(h dx)
orthonormal polynomials, and ``P_K = U D_K V^H`` is the orthogonal projection
onto trigonometric polynomials of degree < K.

All matrices handed out by :class:`TriangularPair` and :func:`limiting_factors`
are in the interleaved ordering; the projection and multiplication matrices
are in the signed layout used by :mod:`edmdlab.fourier_core`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .fourier_core import (
    BeurlingWeight,
    FourierVector,
    WeightedMatrix,
    dft_coeffs,
    toeplitz_section,
    weighted_operator_norm,
)

__all__ = [
    "NotPositiveDefiniteError",
    "InterleavedOrdering",
    "TriangularPair",
    "SzegoFactors",
    "interior_order",
    "multiplication_matrix",
    "cholesky_interleaved",
    "cholesky_real_route",
    "orthonormal_polys",
    "projection_matrix",
    "szego_factor",
    "theta_tail_sum",
    "limiting_factors",
    "diagonal_deviations",
    "projection_error_ratio",
    "triangular_norms",
    "triangular_norm_diagnostic",
    "tilde_residuals",
]


class NotPositiveDefiniteError(ValueError):
    """Cholesky pivot vanished; the density is under-resolved or not positive."""


def interior_order(order):
    """Order of the interior block: the outer quarter of modes is dropped."""
    return max(1, int(0.75 * order))


@dataclass(frozen=True)
class InterleavedOrdering:
    """Bijection between signed modes ``|k| < order`` and interleaved positions."""

    order: int

    @property
    def size(self):
        return 2 * self.order - 1

    @property
    def modes(self):
        """Signed mode at each interleaved position: ``0, -1, 1, -2, 2, ...``."""
        p = np.arange(self.size)
        return np.where(p % 2 == 1, -(p + 1) // 2, p // 2)

    def position(self, k):
        k = np.asarray(k)
        return np.where(k < 0, -2 * k - 1, 2 * k)

    @property
    def perm(self):
        """Signed-layout index of each interleaved position."""
        return self.modes + self.order - 1

    def to_interleaved(self, a):
        """Reorder a signed-layout vector or square matrix."""
        p = self.perm
        a = np.asarray(a)
        return a[p] if a.ndim == 1 else a[np.ix_(p, p)]

    def to_signed(self, a):
        inv = np.argsort(self.perm)
        a = np.asarray(a)
        return a[inv] if a.ndim == 1 else a[np.ix_(inv, inv)]


@dataclass(frozen=True, eq=False)
class TriangularPair:
    """Cholesky factors ``M = V V^H`` and ``U = V^{-H}`` in interleaved order."""

    V: np.ndarray
    U: np.ndarray
    ordering: InterleavedOrdering

    @property
    def order(self):
        return self.ordering.order


def multiplication_matrix(h, order):
    """Toeplitz section ``M_{jk} = h_{j-k}`` of multiplication by the density."""
    return WeightedMatrix(toeplitz_section(h.coeffs, order), order)


def _as_array(m):
    return m.entries if isinstance(m, WeightedMatrix) else np.asarray(m, dtype=complex)


def _lower_inverse(v):
    inv, info = linalg.lapack.ztrtri(v, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"triangular inverse failed (info={info})")
    return np.tril(inv)


def cholesky_interleaved(m):
    """Interleaved Cholesky factorization of a Hermitian positive-definite section.

    Parameters
    ----------
    m : WeightedMatrix
        Multiplication matrix in the signed layout.

    Returns
    -------
    TriangularPair
        ``V`` lower triangular with positive diagonal and ``U = V^{-H}``,
        both in interleaved ordering.
    """
    ordering = InterleavedOrdering(m.order)
    a = ordering.to_interleaved(_as_array(m))
    a = 0.5 * (a + a.conj().T)
    try:
        v = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "multiplication matrix is not numerically positive-definite; "
            "the density coefficients may be under-resolved"
        ) from exc
    v = np.tril(v)
    u = _lower_inverse(v).conj().T
    return TriangularPair(v, u, ordering)


def _real_basis(order):
    # columns: 1, then sqrt2 sin(mx), sqrt2 cos(mx) for m = 1.. in interleaved exponential coords
    d = 2 * order - 1
    w = np.zeros((d, d), dtype=complex)
    w[0, 0] = 1.0
    s = 1.0 / np.sqrt(2.0)
    for mm in range(1, order):
        neg, pos = 2 * mm - 1, 2 * mm
        w[neg, neg], w[pos, neg] = 1j * s, -1j * s  # sqrt2 sin
        w[neg, pos], w[pos, pos] = s, s  # sqrt2 cos
    return w


def cholesky_real_route(m):
    """Interleaved Cholesky factor built from a real-basis factorization.

    Factors ``M`` in the basis ``1, sqrt2 sin x, sqrt2 cos x, ...``, rotates
    each 2x2 diagonal block to lower-triangular form with an LQ step, and
    finally rotates the diagonal to be positive. Slow and only meant as an
    independent check of :func:`cholesky_interleaved` on small sections.
    """
    ordering = InterleavedOrdering(m.order)
    a = ordering.to_interleaved(_as_array(m))
    w = _real_basis(m.order)
    real = w.conj().T @ a @ w
    if np.max(np.abs(real.imag)) > 1e-10 * np.max(np.abs(real)):
        raise ValueError("multiplication matrix is not that of a real density")
    r = np.linalg.cholesky(0.5 * (real.real + real.real.T))
    b = w @ r
    q = np.eye(b.shape[0], dtype=complex)
    for mm in range(1, m.order):
        s = slice(2 * mm - 1, 2 * mm + 1)
        qq, _ = np.linalg.qr(b[s, s].conj().T)
        q[s, s] = qq
    v = b @ q
    phase = np.diag(v) / np.abs(np.diag(v))
    v = np.tril(v * phase.conj()[None, :])
    u = _lower_inverse(v).conj().T
    return TriangularPair(v, u, ordering)


def orthonormal_polys(pair, k):
    """Coefficients of the orthonormal polynomial ``p_k = U e_k``."""
    if abs(k) >= interior_order(pair.order):
        raise ValueError(f"mode {k} outside the interior block of order {interior_order(pair.order)}")
    col = pair.U[:, int(pair.ordering.position(k))]
    return FourierVector(pair.ordering.to_signed(col), pair.order)


def projection_matrix(pair, K):
    """L2(mu)-orthogonal projection onto degree < K polynomials.

    Since ``p_k = U e_k``, conjugating by ``U`` turns the projection into the
    Dirichlet truncation ``D_K``: ``P_K = U D_K U^{-1} = U D_K V^H``. Returned
    in the signed layout of the pair's section.
    """
    if K > pair.order:
        raise ValueError("projection order exceeds the section")
    n = 2 * K - 1
    p = pair.U[:, :n] @ pair.V.conj().T[:n, :]
    return WeightedMatrix(pair.ordering.to_signed(p), pair.order)


@dataclass(frozen=True, eq=False)
class SzegoFactors:
    """Outer factors with ``theta_plus * theta_minus = 1/h`` and ``eta = 1/theta``.

    ``inv_density`` holds the coefficients of ``1/h``.
    """

    theta_plus: FourierVector
    theta_minus: FourierVector
    eta_plus: FourierVector
    eta_minus: FourierVector
    c_bar: float
    inv_density: FourierVector

    @property
    def order(self):
        return self.theta_plus.order


def _pow2(n):
    return int(2 ** np.ceil(np.log2(n)))


def szego_factor(h, order, coeff_order=None):
    """Szego factors of ``1/h``.

    ``log theta_plus`` keeps half the mean and all positive modes of
    ``-log h``; exponentiation is done on the grid. Factors are stored with
    ``coeff_order`` modes (default ``8 * order``) so that products with
    sections of size ``order`` are resolved.
    """
    coeff_order = coeff_order or 8 * order
    n = max(_pow2(8 * coeff_order), 2**12)
    hx = h.on_grid(n)
    if hx.min() <= 0.0:
        raise ValueError(f"density not positive on the grid (min {hx.min():.3e}); log h undefined")
    g = np.fft.fft(-np.log(hx)) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    lg = np.where(k > 0, g, 0.0) + np.where(k == 0, 0.5 * g, 0.0)
    log_theta = np.fft.ifft(lg) * n
    tp = dft_coeffs(np.exp(log_theta), coeff_order)
    ep = dft_coeffs(np.exp(-log_theta), coeff_order)
    # keep the one-sided support exact
    mask = tp.indices < 0
    tp = FourierVector(np.where(mask, 0.0, tp.coeffs), coeff_order)
    ep = FourierVector(np.where(mask, 0.0, ep.coeffs), coeff_order)
    inv = dft_coeffs(1.0 / hx, coeff_order)
    c_bar = float(np.sqrt(np.mean(1.0 / hx)))
    return SzegoFactors(tp, tp.conj_reflect(), ep, ep.conj_reflect(), c_bar, inv)


def theta_tail_sum(sz, sigma):
    """``sum_{l >= 0} l sigma(l)^2 |theta_plus_l|^2``."""
    l = np.arange(sz.order)
    c = np.array([sz.theta_plus[int(i)] for i in l])
    return float(np.sum(l * sigma(l) ** 2 * np.abs(c) ** 2))


def _sign_masks(order):
    k = np.arange(-order + 1, order)
    return k > 0, k < 0, k == 0


def limiting_factors(sz, order):
    """Limiting factors ``(Ubar, Vbar)`` in interleaved ordering.

    ``Ubar = c P0 + P+ T(theta-) + P- T(theta+)`` and
    ``Vbar = P0 / c + T(eta+) P+ + T(eta-) P-`` with ``c = c_bar`` and
    ``P+, P-, P0`` the projections onto positive, negative and zero modes.
    """
    ub, vb = _limiting_signed(sz, order)
    ordering = InterleavedOrdering(order)
    return ordering.to_interleaved(ub), ordering.to_interleaved(vb)


def _limiting_signed(sz, order):
    pos, neg, zero = _sign_masks(order)
    tm = toeplitz_section(sz.theta_minus, order)
    tp = toeplitz_section(sz.theta_plus, order)
    ub = pos[:, None] * tm + neg[:, None] * tp
    ub[zero, zero] = sz.c_bar
    em = toeplitz_section(sz.eta_minus, order)
    ep = toeplitz_section(sz.eta_plus, order)
    vb = ep * pos[None, :] + em * neg[None, :]
    vb[zero, zero] = 1.0 / sz.c_bar
    return ub, vb


def diagonal_deviations(sz, m, order=None, extension=4):
    """Diagonal deviations ``s_k`` and ``s'_k`` over the interior modes.

    ``s_k = e_k^H Ubar^H M Ubar e_k - 1`` uses the section ``m`` directly
    (columns of ``Ubar`` have finite support). ``s'_k = e_k^H Vbar^H M^{-1}
    Vbar e_k - 1`` needs the infinitely supported columns of ``Vbar`` and
    the multiplication by ``1/h``; both are taken on a section ``extension``
    times larger.

    Returns
    -------
    s, s_prime : ndarray
        Real arrays indexed by the signed interior modes
        ``-interior_order(order)+1 .. interior_order(order)-1``.
    """
    order = order or m.order
    ki = interior_order(order)
    big = extension * order
    if sz.order < big + order:
        raise ValueError(f"Szego factors of order {sz.order} cannot resolve an extension to {big}")
    ub, _ = _limiting_signed(sz, order)
    a = _as_array(m)
    cols = slice(order - ki, order + ki - 1)
    u = ub[:, cols]
    s = np.real(np.einsum("ij,ij->j", u.conj(), a @ u)) - 1.0
    _, vb = _limiting_signed(sz, big)
    v = vb[:, big - ki : big + ki - 1]
    tinv = toeplitz_section(sz.inv_density, big)
    s_prime = np.real(np.einsum("ij,ij->j", v.conj(), tinv @ v)) - 1.0
    return s, s_prime


def _check_ratio_monotone(sigma, tau, order):
    k = np.arange(order)
    r = tau.log_eval(k) - sigma.log_eval(k)
    if np.any(np.diff(r) > 1e-12):
        raise ValueError("tau/sigma must be non-increasing on the natural numbers")


def projection_error_ratio(h, sigma, tau, K, order, pair=None):
    """Weighted norm of ``I - P_K`` against the Dirichlet value ``tau(K)/sigma(K)``.

    Returns
    -------
    lhs, rhs, ratio : float
    """
    if 4 * K > order:
        raise ValueError(f"K = {K} too close to the section order {order} (need K <= order/4)")
    _check_ratio_monotone(sigma, tau, order)
    if pair is None:
        pair = cholesky_interleaved(multiplication_matrix(h, order))
    p = projection_matrix(pair, K).entries
    resid = WeightedMatrix(np.eye(p.shape[0]) - p, order)
    lhs = weighted_operator_norm(resid, domain=sigma, codomain=tau)
    rhs = float(np.exp(tau.log_eval(K) - sigma.log_eval(K)))
    return lhs, rhs, lhs / rhs


def triangular_norms(pair, sigma):
    """W^sigma operator norms of ``U``, ``V``, ``U^H`` and ``V^H``."""
    out = {}
    for name, mat in (("U", pair.U), ("V", pair.V), ("U_adj", pair.U.conj().T), ("V_adj", pair.V.conj().T)):
        wm = WeightedMatrix(pair.ordering.to_signed(mat), pair.order)
        out[name] = weighted_operator_norm(wm, domain=sigma, codomain=sigma)
    return out


def triangular_norm_diagnostic(pair, sigma):
    """Largest of the four W^sigma norms from :func:`triangular_norms`."""
    return max(triangular_norms(pair, sigma).values())


def tilde_residuals(pair, sz, sigma=None):
    """Interior L2 -> W^sigma norms of ``U Ubar^{-1} - I`` and ``V Vbar^{-1} - I``.

    Uses ``Ubar^{-1} = Vbar^H`` and ``Vbar^{-1} = Ubar^H``.
    """
    sigma = sigma or BeurlingWeight.flat()
    ub, vb = limiting_factors(sz, pair.order)
    eye = np.eye(pair.U.shape[0])
    ki = interior_order(pair.order)
    n = 2 * ki - 1
    out = []
    for a in (pair.U @ vb.conj().T - eye, pair.V @ ub.conj().T - eye):
        # interior block in interleaved order is the leading n x n corner
        blk = WeightedMatrix(InterleavedOrdering(ki).to_signed(a[:n, :n]), ki)
        out.append(weighted_operator_norm(blk, domain=BeurlingWeight.flat(), codomain=sigma))
    return tuple(out)

