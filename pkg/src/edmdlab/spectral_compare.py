"""Reference resonances, eigenvalue matching, and convergence measurements.

Resonances are computed as eigenvalues of a large Fourier transfer matrix and
kept only where they are stable under doubling the truncation. EDMD spectra
are compared against them eigenvalue-by-eigenvalue (greedy matching) and as
sets (Hausdorff distance above a modulus floor).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .circle_map import sample_iid, trajectory, transfer_matrix
from .edmd import (
    eigendecompose,
    koopman_matrix_continuum,
    koopman_matrix_streamed,
    modes,
    sort_spectrum,
)
from .fourier_core import BeurlingWeight, WeightedMatrix, dft_coeffs, weighted_norm, weighted_operator_norm
from .opuc import cholesky_interleaved, multiplication_matrix, projection_matrix

__all__ = [
    "ResonanceError",
    "AmbiguousMatchWarning",
    "TrackingWarning",
    "ResonanceSet",
    "Fit",
    "ConvergenceCurve",
    "CorrelationResult",
    "fit_log_linear",
    "oracle_resonances",
    "edmd_resonances",
    "match_pairs",
    "match_and_error",
    "hausdorff_distance",
    "hausdorff_study",
    "convergence_study_K",
    "convergence_study_N",
    "mode_convergence",
    "correlation_check",
    "koopman_section",
    "operator_approx_error",
    "projection_chain_check",
    "transfer_norm_trend",
    "data_samples",
]

EPS_FLOOR = 1e2 * np.finfo(float).eps


class ResonanceError(RuntimeError):
    """No stable resonances could be extracted."""


class AmbiguousMatchWarning(UserWarning):
    """Two estimates were equidistant from a reference value."""


class TrackingWarning(UserWarning):
    """An eigenvalue changed rank along a sweep and was tracked by proximity."""


@dataclass(frozen=True, eq=False)
class ResonanceSet:
    """Eigenvalues above ``modulus_floor``, sorted by descending modulus.

    ``resolution`` is the largest modulus among values the source could not
    resolve (zero if all were resolved); set comparisons ignore everything at
    or below it.
    """

    values: np.ndarray
    source: dict
    modulus_floor: float
    resolution: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        v = v[sort_spectrum(v)]
        if np.any(np.abs(v) < self.modulus_floor):
            raise ValueError("values below the modulus floor")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def cut(self):
        return max(self.modulus_floor, self.resolution)


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float
    n_points: int


@dataclass(frozen=True, eq=False)
class ConvergenceCurve:
    """Errors against an abscissa (K or N), one column per tracked quantity.

    ``fits`` holds one :class:`Fit` (or ``None``) per column; the regression
    variable is recorded in ``fit_variable`` (``"K"``, ``"sqrtK"`` or
    ``"logN"``) and the response is always ``log(error)``.
    """

    abscissa: np.ndarray
    errors: np.ndarray
    labels: tuple
    fits: tuple
    fit_variable: str = "K"
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    lags: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    fit: Fit | None
    eigenvalues: np.ndarray
    terms: int

    @property
    def reference_rate(self):
        """``log |lambda_{J+1}|``, the decay rate the residual is compared with."""
        return float(np.log(abs(self.eigenvalues[self.terms + 1])))


def fit_log_linear(x, err):
    """Least-squares fit of ``log(err)`` against ``x`` over points above 1e2 eps.

    Returns ``None`` when fewer than three points qualify.
    """
    x = np.asarray(x, dtype=float)
    err = np.asarray(err, dtype=float)
    m = np.isfinite(err) & (err > EPS_FLOOR)
    if m.sum() < 3:
        return None
    r = stats.linregress(x[m], np.log(err[m]))
    return Fit(float(r.slope), float(r.intercept), float(r.rvalue**2), int(m.sum()))


def _map_cells(func, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(func, items))
    return [func(i) for i in items]


def oracle_resonances(fmap, h=None, K_oracle=256, modulus_floor=1e-3, tol=1e-8):
    """Transfer-matrix resonances that are stable under doubling the truncation.

    Eigenvalues of the order-``K_oracle`` section are kept when the
    order-``2 K_oracle`` section has an eigenvalue within ``tol``. The
    largest modulus among discarded values above the floor is stored as the
    set's resolution.
    """
    if K_oracle < 64:
        raise ValueError("K_oracle must be at least 64")
    if modulus_floor < 1e-4:
        raise ValueError("modulus_floor must be at least 1e-4")
    v1 = linalg.eigvals(transfer_matrix(fmap, h, K_oracle).entries)
    v2 = linalg.eigvals(transfer_matrix(fmap, h, 2 * K_oracle).entries)
    above = v1[np.abs(v1) >= modulus_floor]
    move = np.array([np.min(np.abs(v2 - z)) for z in above])
    stable = move <= tol
    if not np.any(stable):
        raise ResonanceError("no eigenvalue is stable under truncation doubling")
    resolution = float(np.max(np.abs(above[~stable]))) if np.any(~stable) else 0.0
    src = {"kind": "oracle", "K_oracle": K_oracle, "tol": tol}
    return ResonanceSet(above[stable], src, modulus_floor, resolution)


def edmd_resonances(values, modulus_floor=1e-3, source=None):
    """Wrap an EDMD spectrum (array or SpectralResult) as a floored ResonanceSet."""
    v = np.asarray(getattr(values, "eigenvalues", values), dtype=complex)
    return ResonanceSet(v[np.abs(v) >= modulus_floor], source or {"kind": "edmd"}, modulus_floor)


def match_pairs(estimates, reference, top_j):
    """Greedy nearest-neighbour matching without replacement.

    Reference values are processed in their (descending-modulus) order.

    Returns
    -------
    index : ndarray of int
        Estimate index matched to each of the first ``top_j`` references.
    errors : ndarray
        ``|estimate - reference|`` per match.
    tied : ndarray of bool
        True where two estimates were within 1e-12 of the same distance; the
        lower index was taken.
    """
    est = np.asarray(getattr(estimates, "values", estimates), dtype=complex)
    ref = np.asarray(getattr(reference, "values", reference), dtype=complex)
    if est.size == 0 or ref.size == 0:
        raise ValueError("both sets must be non-empty")
    if top_j > min(est.size, ref.size):
        raise ValueError(f"top_j = {top_j} exceeds set sizes ({est.size}, {ref.size})")
    used = np.zeros(est.size, dtype=bool)
    index = np.empty(top_j, dtype=int)
    errors = np.empty(top_j)
    tied = np.zeros(top_j, dtype=bool)
    for i in range(top_j):
        d = np.where(used, np.inf, np.abs(est - ref[i]))
        k = int(np.argmin(d))
        close = np.flatnonzero(np.abs(d - d[k]) <= 1e-12)
        tied[i] = close.size > 1
        index[i], errors[i] = k, d[k]
        used[k] = True
    return index, errors, tied


def match_and_error(estimates, reference, top_j):
    """Per-reference errors ``|lambda_{j,K} - lambda_j|`` from :func:`match_pairs`."""
    _, errors, tied = match_pairs(estimates, reference, top_j)
    if np.any(tied):
        warnings.warn(
            f"ambiguous matches at reference ranks {np.flatnonzero(tied).tolist()}; lowest index taken",
            AmbiguousMatchWarning,
            stacklevel=2,
        )
    return errors


def hausdorff_distance(a, b):
    """Hausdorff distance between two resonance sets above their common cut.

    The cut is the largest floor or resolution of the two sets, so values a
    source cannot resolve do not enter the comparison.
    """
    cut = max(a.cut, b.cut)
    strict = a.resolution > 0 or b.resolution > 0
    keep = (lambda v: np.abs(v) > cut) if strict else (lambda v: np.abs(v) >= cut)
    va, vb = a.values[keep(a.values)], b.values[keep(b.values)]
    if va.size == 0 and vb.size == 0:
        return 0.0
    if va.size == 0 or vb.size == 0:
        return float("inf")
    d = np.abs(va[:, None] - vb[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def hausdorff_study(fmap, h, K_list, oracle, workers=1):
    """Hausdorff distance of the continuum EDMD spectrum to the oracle, per K."""

    def cell(K):
        sr = eigendecompose(koopman_matrix_continuum(fmap, h, K))
        return hausdorff_distance(edmd_resonances(sr, oracle.modulus_floor), oracle)

    d = np.array(_map_cells(cell, list(K_list), workers))
    ks = np.asarray(K_list, dtype=float)
    fit = fit_log_linear(np.sqrt(ks), d)
    return ConvergenceCurve(ks, d[:, None], ("hausdorff",), (fit,), "sqrtK", {"cut": oracle.cut})


def data_samples(fmap, h, N, seed, sampling="trajectory", burn_in=64):
    """``N`` samples from a trajectory started at a seeded random point, or i.i.d. from ``h``."""
    rng = np.random.default_rng(seed)
    if sampling == "trajectory":
        return trajectory(fmap, rng.uniform(0.0, 2.0 * np.pi), N, burn_in, seed=seed)
    if sampling == "iid":
        return sample_iid(h, N, seed=rng.integers(2**63))
    raise ValueError(f"unknown sampling {sampling!r}")


def convergence_study_K(
    fmap,
    h,
    K_list,
    mode="continuum",
    N=None,
    seeds=1,
    oracle=None,
    tracked=(1, 2, 3, 4),
    sampling="trajectory",
    base_seed=0,
    workers=1,
):
    """Eigenvalue errors against oracle resonances as the dictionary grows.

    ``mode`` is ``"continuum"`` or ``"data"``; data mode averages the errors
    over ``seeds`` independent runs of ``N`` samples. Errors for the oracle
    ranks in ``tracked`` are fitted as ``log err = alpha K + beta``. Ranks
    beyond the oracle's resolved values are compared with zero.
    """
    K_list = list(K_list)
    if any(b <= a for a, b in zip(K_list, K_list[1:])):
        raise ValueError("K_list must be strictly ascending")
    if oracle is None:
        oracle = oracle_resonances(fmap, h)
    top = max(tracked) + 1

    def spectrum(K, seed=None):
        if mode == "continuum":
            return eigendecompose(koopman_matrix_continuum(fmap, h, K)).eigenvalues
        x = data_samples(fmap, h, N, [base_seed, seed, K], sampling)
        return eigendecompose(koopman_matrix_streamed(x, fmap, K, seed=seed)).eigenvalues

    # ranks the oracle could not resolve are compared with 0, where the spectrum accumulates
    ref = np.concatenate([oracle.values, np.zeros(max(0, top - len(oracle)), dtype=complex)])

    def cell(K):
        runs = [None] if mode == "continuum" else list(range(seeds))
        errs = [match_and_error(spectrum(K, s), ref, min(top, 2 * K - 1)) for s in runs]
        out = np.full(len(tracked), np.nan)
        e = np.mean(errs, axis=0)
        for i, j in enumerate(tracked):
            if j < e.size:
                out[i] = e[j]
        return out

    if mode not in ("continuum", "data"):
        raise ValueError(f"unknown mode {mode!r}")
    errors = np.array(_map_cells(cell, K_list, workers))
    fits = tuple(fit_log_linear(K_list, errors[:, i]) for i in range(len(tracked)))
    labels = tuple(f"error_{j}" for j in tracked)
    extra = {"oracle": oracle.values[:top], "mode": mode}
    return ConvergenceCurve(np.asarray(K_list, dtype=float), errors, labels, fits, "K", extra)


def convergence_study_N(fmap, h, K, N_list, seeds=8, sampling="trajectory", base_seed=0, rank=1, workers=1):
    """Mean data-EDMD eigenvalue error against the continuum matrix, versus N.

    The continuum eigenvalue of the given rank is matched to its nearest
    data eigenvalue; the log-log slope is stored in the fit.
    """
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly ascending")
    if min(N_list) < 2 * K - 1:
        raise ValueError(f"every N must be at least 2K-1 = {2 * K - 1}")
    target = eigendecompose(koopman_matrix_continuum(fmap, h, K)).eigenvalues[rank]

    def cell(args):
        N, s = args
        x = data_samples(fmap, h, N, [base_seed, s, N], sampling)
        ev = eigendecompose(koopman_matrix_streamed(x, fmap, K, seed=s)).eigenvalues
        return float(np.min(np.abs(ev - target))), ev

    cells = [(N, s) for N in N_list for s in range(seeds)]
    res = _map_cells(cell, cells, workers)
    per = np.array([r[0] for r in res]).reshape(len(N_list), seeds)
    mean = per.mean(axis=1)
    fit = fit_log_linear(np.log(N_list), mean)
    spectra = [r[1] for r in res]
    extra = {"per_seed": per, "target": target, "spectra": spectra, "sampling": sampling}
    return ConvergenceCurve(np.asarray(N_list, dtype=float), mean[:, None], ("error",), (fit,), "logN", extra)


def _aligned_error(v, ref, err_weight, norm_weight):
    n = max(v.order, ref.order)
    v, ref = v.resize(n), ref.resize(n)
    v = v * (1.0 / weighted_norm(v, norm_weight))
    ref = ref * (1.0 / weighted_norm(ref, norm_weight))
    scale = np.exp(2.0 * norm_weight.log_eval(ref.indices))
    ip = np.sum(scale * np.conj(ref.coeffs) * v.coeffs)
    if abs(ip) > 0:
        v = v * (np.conj(ip) / abs(ip))
    return weighted_norm(v - ref, err_weight)


def _ratio(num, den):
    # nan where the weighted error is exactly zero
    out = np.full(num.shape, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _tracked_modes(fmap, h, K, j, target):
    sr = eigendecompose(koopman_matrix_continuum(fmap, h, K))
    if target is None:
        return modes(sr, j), sr
    k = int(np.argmin(np.abs(sr.eigenvalues - target)))
    if k != j:
        warnings.warn(f"rank {j} moved to rank {k} at K = {K}; tracked by proximity", TrackingWarning, stacklevel=3)
    return modes(sr, k), sr


def mode_convergence(fmap, h, j, K_list, t=0.2, kappa=None, K_ref=None, gap_tol=1e-6, workers=1):
    """Left- and right-mode errors against a larger-K reference.

    Left modes are measured in ``hardy(kappa t)``, right modes in the
    reciprocal ``hardy(t)`` norm; each mode is normalized to unit norm in the
    space it is measured in and phase-aligned with the reference before
    differencing. The right-mode curve also records the flat (L2) error of
    the same normalized modes and its ratio to the weighted error.

    ``K_ref`` defaults to twice the largest K so the reference is not one of
    the measured runs.
    """
    kappa = fmap.kappa if kappa is None else kappa
    K_list = list(K_list)
    K_ref = K_ref or 2 * max(K_list)
    (a_ref, b_ref, lam_ref), sr_ref = _tracked_modes(fmap, h, K_ref, j, None)
    others = np.delete(sr_ref.eigenvalues, j)
    gap = float(np.min(np.abs(others - lam_ref))) if others.size else np.inf
    if gap < gap_tol:
        raise ValueError(f"eigenvalue of rank {j} is not simple at K = {K_ref} (gap {gap:.2e})")
    wa = BeurlingWeight.hardy(kappa * t)
    wb = BeurlingWeight.hardy(t).reciprocal()
    flat = BeurlingWeight.flat()

    def cell(K):
        (a, b, lam), _ = _tracked_modes(fmap, h, K, j, lam_ref)
        return (
            _aligned_error(a, a_ref, wa, wa),
            _aligned_error(b, b_ref, wb, wb),
            _aligned_error(b, b_ref, flat, wb),
            abs(lam - lam_ref),
        )

    rows = np.array(_map_cells(cell, K_list, workers))
    ks = np.asarray(K_list, dtype=float)
    left = ConvergenceCurve(ks, rows[:, :1], ("left_weighted",), (fit_log_linear(ks, rows[:, 0]),), "K",
                            {"weight": wa, "K_ref": K_ref, "eigenvalue": lam_ref})
    right = ConvergenceCurve(
        ks,
        rows[:, 1:3],
        ("right_weighted", "right_flat"),
        (fit_log_linear(ks, rows[:, 1]), fit_log_linear(ks, rows[:, 2])),
        "K",
        {"weight": wb, "K_ref": K_ref, "eigenvalue": lam_ref, "flat_to_weighted": _ratio(rows[:, 2], rows[:, 1]),
         "eigenvalue_error": rows[:, 3]},
    )
    return left, right


def correlation_check(fmap, h, phi, psi, n_max=20, J=4, K_oracle=128):
    """Lag correlations against their truncated resonance expansion.

    The left side ``int phi (psi o f^n) h dx/2pi`` is computed by iterating the
    Lebesgue transfer matrix on the coefficients of ``phi h``. The right side
    keeps the eigenvalue ``1`` and the next ``J`` eigen-triples of the same
    matrix, each with the bi-orthogonal pairing ``l^H r``. The residual
    is fitted as ``log r(n) = slope n + c``.
    """
    if n_max > 40:
        raise ValueError("n_max must be at most 40")
    lmat = transfer_matrix(fmap, None, K_oracle).entries
    vals, vl, vr = linalg.eig(lmat, left=True, right=True)
    idx = sort_spectrum(vals)
    vals, vl, vr = vals[idx], vl[:, idx], vr[:, idx]
    terms = J
    while terms > 0:
        top = vals[: terms + 1]
        d = np.abs(top[:, None] - top[None, :]) + np.eye(top.size)
        if d.min() >= 1e-8:
            break
        terms -= 1
    if terms != J:
        warnings.warn(f"leading eigenvalues not simple; J reduced to {terms}", UserWarning, stacklevel=2)
    n_grid = 8 * K_oracle
    hx = np.ones(n_grid) if h is None else h.on_grid(n_grid)
    g = dft_coeffs(phi.resize(K_oracle).on_grid(n_grid) * hx, K_oracle).coeffs
    psi_rev = psi.resize(K_oracle).coeffs[::-1]
    lags = np.arange(n_max + 1)
    lhs = np.empty(lags.size, dtype=complex)
    v = g.copy()
    for n in lags:
        lhs[n] = np.sum(v * psi_rev)
        v = lmat @ v
    rhs = np.zeros(lags.size, dtype=complex)
    for j in range(terms + 1):
        pair = np.vdot(vl[:, j], vr[:, j])
        coef = np.vdot(vl[:, j], g) / pair * np.sum(vr[:, j] * psi_rev)
        rhs += coef * vals[j] ** lags
    resid = np.abs(lhs - rhs)
    return CorrelationResult(lags, lhs, rhs, resid, fit_log_linear(lags, resid), vals, terms)


def koopman_section(fmap, order):
    """Lebesgue-basis Koopman section, the adjoint of the transfer section."""
    return transfer_matrix(fmap, None, order).entries.conj().T


def operator_approx_error(fmap, h, K, t=0.2, K_big=None, kappa=None, pair=None):
    """Finite-section norms of ``(I - P_K) Koop`` and ``Koop (I - P_K)``.

    The first is measured in the reciprocal ``hardy(t)`` norm, the second in
    the reciprocal ``hardy(kappa t)`` norm.
    """
    kappa = fmap.kappa if kappa is None else kappa
    K_big = K_big or 4 * K
    if K > K_big:
        raise ValueError("K cannot exceed K_big")
    if pair is None:
        pair = cholesky_interleaved(multiplication_matrix(h, K_big))
    p = projection_matrix(pair, K).entries
    koop = koopman_section(fmap, K_big)
    eye = np.eye(p.shape[0])
    wr = BeurlingWeight.hardy(t).reciprocal()
    wl = BeurlingWeight.hardy(kappa * t).reciprocal()
    right = weighted_operator_norm(WeightedMatrix((eye - p) @ koop, K_big), wr, wr)
    left = weighted_operator_norm(WeightedMatrix(koop @ (eye - p), K_big), wl, wl)
    return right, left


def projection_chain_check(fmap, h, K, t=0.2, K_big=None, pair=None):
    """Measured ``||Koop - P_K Koop||`` and ``||I - P_K|| * ||Koop||`` in the reciprocal hardy(t) norm."""
    K_big = K_big or 4 * K
    if pair is None:
        pair = cholesky_interleaved(multiplication_matrix(h, K_big))
    p = projection_matrix(pair, K).entries
    koop = koopman_section(fmap, K_big)
    eye = np.eye(p.shape[0])
    w = BeurlingWeight.hardy(t).reciprocal()
    lhs = weighted_operator_norm(WeightedMatrix(koop - p @ koop, K_big), w, w)
    a = weighted_operator_norm(WeightedMatrix(eye - p, K_big), w, w)
    b = weighted_operator_norm(WeightedMatrix(koop, K_big), w, w)
    return lhs, a * b


def transfer_norm_trend(fmap, h, u, t, orders):
    """``hardy(u) -> hardy(t)`` norms of transfer sections of increasing order."""
    return np.array(
        [
            weighted_operator_norm(transfer_matrix(fmap, h, K), BeurlingWeight.hardy(u), BeurlingWeight.hardy(t))
            for K in orders
        ]
    )
