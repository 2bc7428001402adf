"""Extended dynamic mode decomposition in the Fourier dictionary.

The dictionary is ``e_k(x) = exp(ikx)`` for ``|k| < K``. From samples ``x_n``
the Koopman matrix is the least-squares solution ``G^{-1} A`` with
``G = Psi0^H Psi0 / N`` and ``A = Psi0^H Psi1 / N``; its infinite-data limit
replaces the empirical averages by integrals against ``h dx / 2pi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .circle_map import _chop, _grid_guess, _settled_quadrature, quadrature_matrix, transfer_matrix
from .fourier_core import FourierVector, grid, toeplitz_section

__all__ = [
    "EDMDError",
    "IllConditionedWarning",
    "DataMatrices",
    "KoopmanMatrix",
    "SpectralResult",
    "build_data_matrices",
    "koopman_matrix_data",
    "koopman_matrix_streamed",
    "koopman_matrix_continuum",
    "continuum_gram",
    "eigendecompose",
    "modes",
    "sort_spectrum",
    "normalize_columns",
    "duality_residual",
]


class EDMDError(RuntimeError):
    """Factorization or eigen-solver failure."""


class IllConditionedWarning(UserWarning):
    """Empirical Gram matrix is close to singular."""


@dataclass(frozen=True, eq=False)
class DataMatrices:
    """``psi0[n, k] = e_k(x_n)`` and ``psi1[n, k] = e_k(f(x_n))``."""

    psi0: np.ndarray
    psi1: np.ndarray
    n_samples: int
    order: int


@dataclass(frozen=True, eq=False)
class KoopmanMatrix:
    """Koopman matrix in the signed Fourier layout.

    ``provenance`` is ``{"kind": "continuum"}`` or
    ``{"kind": "data", "n_samples": N, "seed": s}``. ``gram`` is the Gram
    matrix ``G`` that defines the inner product the projection is orthogonal in.
    """

    entries: np.ndarray
    order: int
    provenance: dict = field(default_factory=dict)
    gram: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Eigen-triples sorted by descending modulus.

    Columns of ``right_vectors`` and ``left_vectors`` have unit norm with the
    largest-modulus entry real positive; ``left_vectors[:, i]^H A = lambda_i
    left_vectors[:, i]^H``.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    right_residuals: np.ndarray
    left_residuals: np.ndarray
    order: int
    matrix_norm: float
    gram: np.ndarray | None = None


def build_data_matrices(samples, fmap, K):
    """Dictionary evaluated at the samples and at their images.

    Raises
    ------
    ValueError
        If there are fewer than ``2K - 1`` samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 * K - 1:
        raise ValueError(f"need at least 2K-1 = {2 * K - 1} samples for order {K}, got {x.size}")
    k = np.arange(-K + 1, K)
    psi0 = np.exp(1j * np.outer(x, k))
    psi1 = np.exp(1j * np.outer(fmap(x), k))
    return DataMatrices(psi0, psi1, x.size, K)


def _solve_normal(gram, stiff, ridge, provenance, order):
    d = gram.shape[0]
    g = gram + ridge * np.eye(d)
    ev = np.linalg.eigvalsh(g)
    cond = ev[-1] / ev[0] if ev[0] > 0 else np.inf
    if cond > 1e12 and ridge == 0:
        warnings.warn(
            f"Gram matrix condition number {cond:.3e} exceeds 1e12; "
            f"consider ridge >= {1e-10 * ev[-1]:.1e}",
            IllConditionedWarning,
            stacklevel=3,
        )
    try:
        cf = linalg.cho_factor(g, lower=False)
    except linalg.LinAlgError as exc:
        raise EDMDError(f"Gram matrix factorization failed (condition {cond:.3e})") from exc
    return KoopmanMatrix(linalg.cho_solve(cf, stiff), order, provenance, g)


def koopman_matrix_data(dm, ridge=0.0, seed=None):
    """Least-squares Koopman matrix from data matrices.

    Solves ``(G + ridge I) K = A`` by Cholesky; warns with a suggested ridge if
    ``G`` has condition number above 1e12.
    """
    n = dm.n_samples
    gram = dm.psi0.conj().T @ dm.psi0 / n
    stiff = dm.psi0.conj().T @ dm.psi1 / n
    prov = {"kind": "data", "n_samples": n, "seed": seed}
    return _solve_normal(gram, stiff, ridge, prov, dm.order)


def koopman_matrix_streamed(samples, fmap, K, ridge=0.0, seed=None, chunk=65536):
    """Same as :func:`koopman_matrix_data` but accumulates ``G`` and ``A`` in chunks.

    Avoids holding the ``N x (2K-1)`` data matrices for large ``N``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 * K - 1:
        raise ValueError(f"need at least 2K-1 = {2 * K - 1} samples for order {K}, got {x.size}")
    d = 2 * K - 1
    gram = np.zeros((d, d), dtype=complex)
    stiff = np.zeros((d, d), dtype=complex)
    for s in range(0, x.size, chunk):
        dm = build_data_matrices(x[s : s + chunk], fmap, K) if x[s : s + chunk].size >= d else None
        if dm is None:
            xs = x[s : s + chunk]
            k = np.arange(-K + 1, K)
            p0, p1 = np.exp(1j * np.outer(xs, k)), np.exp(1j * np.outer(fmap(xs), k))
        else:
            p0, p1 = dm.psi0, dm.psi1
        gram += p0.conj().T @ p0
        stiff += p0.conj().T @ p1
    prov = {"kind": "data", "n_samples": x.size, "seed": seed}
    return _solve_normal(gram / x.size, stiff / x.size, ridge, prov, K)


def continuum_gram(h, K):
    """Toeplitz Gram matrix ``G_{jk} = h_{j-k}`` of the dictionary in L2(h dx/2pi)."""
    if h is None or h.is_uniform:
        return np.eye(2 * K - 1, dtype=complex)
    return toeplitz_section(h.coeffs, K)


def koopman_matrix_continuum(fmap, h, K, n=None):
    """Infinite-data Koopman matrix ``G^{-1} A``.

    ``A_{jk} = (1/2pi) int e^{-ijx} e^{ik f(x)} h(x) dx`` by trapezoidal
    quadrature; the grid is doubled until entries settle to 1e-10.
    """
    uniform = h is None or h.is_uniform

    def build(nn):
        x = grid(nn)
        wgt = np.ones(nn) if uniform else h.on_grid(nn)
        q = quadrature_matrix(fmap.lift(x), wgt, K, nn)
        return _chop(q.conj().T, float(np.max(np.abs(wgt))))

    h_order = 1 if uniform else h.order
    n0 = max(_grid_guess(fmap, K, h_order), 4 * K * fmap.degree, 2**10)
    if n is None:
        stiff, _ = _settled_quadrature(build, n0)
    else:
        stiff = build(n)
    gram = continuum_gram(h, K)
    if uniform:
        entries = stiff
    else:
        entries = linalg.solve(gram, stiff, assume_a="her")
    return KoopmanMatrix(entries, K, {"kind": "continuum"}, gram)


def sort_spectrum(vals):
    """Indices ordering eigenvalues by descending modulus, then real, then imaginary part.

    Moduli are compared after rounding to 12 decimals so that conjugate pairs
    tie and are ordered by the imaginary part.
    """
    mod = np.round(np.abs(vals), 12)
    return np.lexsort((-vals.imag, -np.round(vals.real, 12), -mod))


def normalize_columns(v):
    """Unit Euclidean norm, largest-modulus entry rotated to the positive real axis."""
    v = np.array(v, dtype=complex)
    nrm = np.linalg.norm(v, axis=0)
    nrm[nrm == 0] = 1.0
    v = v / nrm
    idx = np.argmax(np.abs(v), axis=0)
    piv = v[idx, np.arange(v.shape[1])]
    phase = np.where(np.abs(piv) > 0, piv / np.where(np.abs(piv) > 0, np.abs(piv), 1.0), 1.0)
    return v * phase.conj()[None, :]


def eigendecompose(km):
    """Full nonsymmetric eigen-decomposition with left and right vectors.

    Accepts a :class:`KoopmanMatrix`, a ``WeightedMatrix`` or a square array.
    """
    a = np.asarray(getattr(km, "entries", km), dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    d = a.shape[0]
    order = getattr(km, "order", (d + 1) // 2)
    try:
        vals, vl, vr = linalg.eig(a, left=True, right=True)
    except linalg.LinAlgError as exc:
        raise EDMDError(f"eigen-solver did not converge (condition {np.linalg.cond(a):.3e})") from exc
    idx = sort_spectrum(vals)
    vals = vals[idx]
    vr = normalize_columns(vr[:, idx])
    vl = normalize_columns(vl[:, idx])
    rres = np.linalg.norm(a @ vr - vr * vals[None, :], axis=0)
    lres = np.linalg.norm(vl.conj().T @ a - vals[:, None] * vl.conj().T, axis=1)
    return SpectralResult(
        vals, vr, vl, rres, lres, order, float(np.linalg.norm(a, 2)), getattr(km, "gram", None)
    )


def modes(sr, j):
    """Left mode ``a``, right mode ``b`` and eigenvalue of rank ``j``.

    ``b`` is the right eigenvector. ``a`` is the left eigenvector with respect
    to the L2(mu) pairing of the Gram matrix, ``a = G^{-1} w`` for the
    Euclidean left eigenvector ``w``; it coincides with ``w`` when no Gram
    matrix is attached. Both carry the unit-norm, positive-pivot convention.
    """
    if not 0 <= j < sr.eigenvalues.size:
        raise IndexError(f"rank {j} outside spectrum of size {sr.eigenvalues.size}")
    w = sr.left_vectors[:, j]
    if sr.gram is not None:
        w = linalg.solve(sr.gram, w, assume_a="her")
    a = normalize_columns(w[:, None])[:, 0]
    b = sr.right_vectors[:, j]
    return FourierVector(a, sr.order), FourierVector(b, sr.order), complex(sr.eigenvalues[j])


def duality_residual(fmap, h, K):
    """Largest interior entry of ``Kp^H - Lp`` in the orthonormal-polynomial basis.

    ``Kp = U_K^H (G K_K) U_K`` is the continuum Koopman matrix in the basis
    ``p_k`` and ``Lp = V^H L_mu U`` the transfer matrix in the same basis,
    taken on a section of order ``2K`` so its rows are not truncated. The
    comparison is restricted to the interior modes of order ``K``.
    """
    from .opuc import InterleavedOrdering, cholesky_interleaved, interior_order, multiplication_matrix

    if h is None:
        from .circle_map import DensitySpec

        h = DensitySpec.uniform()
    km = koopman_matrix_continuum(fmap, h, K)
    pk = cholesky_interleaved(multiplication_matrix(h, K))
    kp = pk.U.conj().T @ InterleavedOrdering(K).to_interleaved(km.gram @ km.entries) @ pk.U
    pb = cholesky_interleaved(multiplication_matrix(h, 2 * K))
    lb = pb.ordering.to_interleaved(transfer_matrix(fmap, h, 2 * K).entries)
    lp = pb.V.conj().T @ lb @ pb.U
    n = 2 * interior_order(K) - 1
    return float(np.max(np.abs(kp[:n, :n].conj().T - lp[:n, :n])))
