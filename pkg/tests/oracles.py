"""Independent reference computations shared by the test modules."""

import numpy as np

from edmdlab.fourier_core import FourierVector, grid
from edmdlab.opuc import InterleavedOrdering


def gram_schmidt_polys(h, count, n=None):
    """Gram-Schmidt of ``e_0, e_-1, e_1, ...`` under quadrature of ``h dx / 2pi``.

    Returns ``count`` FourierVectors of order ``(count + 1) // 2 + 1``.
    """
    order = (count + 1) // 2 + 1
    n = n or max(1024, 16 * max(order, h.order))
    x = grid(n)
    wts = h.on_grid(n) / n
    modes = InterleavedOrdering(order).modes[:count]
    basis = np.exp(1j * np.outer(modes, x))
    polys, coefs = [], []
    for i in range(count):
        c = np.zeros(count, dtype=complex)
        c[i] = 1.0
        f = basis[i].copy()
        for pv, pc in zip(polys, coefs):
            proj = np.sum(np.conj(pv) * f * wts)
            f = f - proj * pv
            c = c - proj * pc
        nrm = np.sqrt(np.sum(np.abs(f) ** 2 * wts))
        polys.append(f / nrm)
        coefs.append(c / nrm)
    out = []
    for c in coefs:
        v = np.zeros(2 * order - 1, dtype=complex)
        v[modes + order - 1] = c
        out.append(FourierVector(v, order))
    return out


def mu_inner(h, f, g, n=4096):
    """Quadrature of ``(1/2pi) int conj(f) g h dx`` for FourierVectors."""
    return np.mean(np.conj(f.on_grid(n)) * g.on_grid(n) * h.on_grid(n))
