"""Command-line entry point ``edmdlab``.

Each command reads an experiment config, writes CSV and SVG files into the
output directory, and finishes with ``manifest.ini`` listing every artifact.
Exit codes: 0 success, 2 configuration error, 3 numerical failure (a
``failure.txt`` with the traceback is left in the output directory).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import io
import os
import sys
import traceback
from importlib import metadata

import numpy as np
from scipy import linalg

from . import svg
from .circle_map import DensityError, NotExpandingError, QuadratureError
from .config import ConfigError, dump_config, load_config
from .edmd import EDMDError, eigendecompose, koopman_matrix_continuum, modes
from .fourier_core import AliasingError, BeurlingWeight, SingularValueError, grid
from .opuc import (
    NotPositiveDefiniteError,
    cholesky_interleaved,
    diagonal_deviations,
    interior_order,
    multiplication_matrix,
    projection_error_ratio,
    szego_factor,
    triangular_norm_diagnostic,
)
from .spectral_compare import (
    ResonanceError,
    convergence_study_K,
    convergence_study_N,
    fit_log_linear,
    mode_convergence,
    oracle_resonances,
)

NUMERICAL_ERRORS = (
    AliasingError,
    DensityError,
    EDMDError,
    NotPositiveDefiniteError,
    QuadratureError,
    ResonanceError,
    SingularValueError,
    linalg.LinAlgError,
    FloatingPointError,
)


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


class Writer:
    """Single point through which all files are written, so the manifest sees every one."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.artifacts = []
        self.fits = {}
        self.notes = []
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name):
        self.artifacts.append(name)
        return os.path.join(self.out_dir, name)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _num(c) for c in r])
        with open(self._path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())

    def svg(self, name, panels, **kw):
        with open(self._path(name), "w", encoding="utf-8") as fh:
            fh.write(svg.render(panels, **kw))

    def fit(self, key, fit):
        self.fits[key] = fit

    def note(self, msg):
        self.notes.append(msg)
        print(f"note: {msg}", file=sys.stderr)

    def manifest(self, cfg, command, seeds):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            version = metadata.version("artifact")
        except metadata.PackageNotFoundError:  # pragma: no cover
            version = "unknown"
        cp["run"] = {
            "command": command,
            "config_hash": cfg.config_hash(),
            "software_version": version,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "seeds": ", ".join(str(s) for s in seeds),
        }
        cp["artifacts"] = {f"file{i}": a for i, a in enumerate(self.artifacts)}
        cp["fits"] = {}
        for key, f in self.fits.items():
            if f is None:
                cp["fits"][key] = "skipped"
            else:
                cp["fits"][key] = f"slope={f.slope:.17g}, intercept={f.intercept:.17g}, r2={f.r2:.17g}"
        if self.notes:
            cp["notes"] = {f"note{i}": n for i, n in enumerate(self.notes)}
        buf = io.StringIO()
        cp.write(buf)
        with open(os.path.join(self.out_dir, "manifest.ini"), "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        with open(os.path.join(self.out_dir, "config.ini"), "w", encoding="utf-8") as fh:
            fh.write(dump_config(cfg))


def _spectrum_rows(values, residuals=None):
    res = residuals if residuals is not None else np.zeros(len(values))
    return [(i, v.real, v.imag, abs(v), r) for i, (v, r) in enumerate(zip(values, res))]


def cmd_resonances(cfg, w, workers=1):
    fmap = cfg.build_map()
    h = cfg.build_density(fmap)
    orc = oracle_resonances(fmap, h, cfg.K_oracle, cfg.modulus_floor)
    w.csv("resonances.csv", ["rank", "re_lambda", "im_lambda", "modulus", "residual"], _spectrum_rows(orc.values))
    p = svg.Panel("transfer-operator resonances", "Re", "Im", equal=True).unit_circle()
    p.add(orc.values.real, orc.values.imag, style="points")
    w.svg("resonances.svg", [p], width=420, height=420)
    w.note(f"{len(orc)} resonances above floor {cfg.modulus_floor:g}; resolution radius {orc.resolution:.3g}")
    return [cfg.seed]


def cmd_fig1(cfg, w, workers=1):
    fmap = cfg.build_map()
    h = cfg.build_density(fmap)
    orc = oracle_resonances(fmap, h, cfg.K_oracle, cfg.modulus_floor)
    curve = convergence_study_K(fmap, h, cfg.K_list, oracle=orc, tracked=cfg.tracked, workers=workers)
    w.csv("fig1_errors.csv", ["K"] + list(curve.labels), [[int(k)] + list(r) for k, r in zip(curve.abscissa, curve.errors)])
    rows = []
    for lab, f in zip(curve.labels, curve.fits):
        w.fit(f"fig1_{lab}", f)
        if f is None:
            w.note(f"fit of {lab} skipped (fewer than three errors above the numerical floor)")
            rows.append((lab, "nan", "nan", "nan", 0))
        else:
            rows.append((lab, f.slope, f.intercept, f.r2, f.n_points))
    w.csv("fig1_fits.csv", ["label", "fit_slope", "fit_intercept", "fit_r2", "n_points"], rows)
    spec_rows = []
    for K in cfg.K_list:
        sr = eigendecompose(koopman_matrix_continuum(fmap, h, K))
        spec_rows += [(K,) + r for r in _spectrum_rows(sr.eigenvalues, sr.right_residuals)]
    w.csv("fig1_spectra.csv", ["K", "rank", "re_lambda", "im_lambda", "modulus", "residual"], spec_rows)
    p = svg.Panel("eigenvalue error vs K", "K", "|error|", logy=True)
    for i, lab in enumerate(curve.labels):
        p.add(curve.abscissa, curve.errors[:, i], lab)
    q = svg.Panel("resonances", "Re", "Im", equal=True).unit_circle()
    q.add(orc.values.real, orc.values.imag, "oracle", style="points")
    w.svg("fig1.svg", [q, p])
    return [cfg.seed]


def cmd_fig2(cfg, w, workers=1):
    fmap = cfg.build_map()
    h = cfg.build_density(fmap)
    j = cfg.mode_rank
    x = grid(512)
    cols, header = [x], ["x"]
    pa = svg.Panel(f"|a_{j},K(x)|", "x", "")
    pb = svg.Panel(f"|b_{j},K(x)|", "x", "")
    for K in cfg.K_list:
        sr = eigendecompose(koopman_matrix_continuum(fmap, h, K))
        a, b, _ = modes(sr, j)
        av, bv = np.abs(a.evaluate(x)), np.abs(b.evaluate(x))
        cols += [av, bv]
        header += [f"abs_a_K{K}", f"abs_b_K{K}"]
        pa.add(x, av, f"K={K}")
        pb.add(x, bv, f"K={K}")
    w.csv("fig2_modes.csv", header, np.column_stack(cols).tolist())
    panels = [pa, pb]
    if len(cfg.K_list) > 1:
        left, right = mode_convergence(fmap, h, j, cfg.K_list, cfg.t, cfg.kappa, workers=workers)
        rows = [
            (int(k), ea, eb, ef, ef / eb if eb > 0 else float("nan"))
            for k, ea, eb, ef in zip(left.abscissa, left.errors[:, 0], right.errors[:, 0], right.errors[:, 1])
        ]
        w.csv("fig2_convergence.csv", ["K", "left_weighted", "right_weighted", "right_flat", "flat_to_weighted"], rows)
        w.fit("fig2_left_weighted", left.fits[0])
        w.fit("fig2_right_weighted", right.fits[0])
        w.fit("fig2_right_flat", right.fits[1])
        pc = svg.Panel("mode errors vs K", "K", "error", logy=True)
        pc.add(left.abscissa, left.errors[:, 0], "left, weighted")
        pc.add(right.abscissa, right.errors[:, 0], "right, weighted")
        pc.add(right.abscissa, right.errors[:, 1], "right, flat")
        panels.append(pc)
    else:
        w.note("single K: no convergence panel")
    w.svg("fig2.svg", panels)
    return [cfg.seed]


def cmd_fig3(cfg, w, workers=1):
    fmap = cfg.build_map()
    h = cfg.build_density(fmap)
    K = cfg.fig3_K
    if min(cfg.N_list) < 2 * K - 1:
        raise ConfigError(f"[experiment] N_list: every N must be at least 2K-1 = {2 * K - 1} for fig3_K = {K}")
    curve = convergence_study_N(
        fmap, h, K, cfg.N_list, seeds=cfg.seeds, sampling=cfg.sampling, base_seed=cfg.seed, workers=workers
    )
    per = curve.extra["per_seed"]
    w.csv(
        "fig3_errors.csv",
        ["N", "mean_error"] + [f"error_seed{s}" for s in range(cfg.seeds)],
        [[int(n), m] + list(p) for n, m, p in zip(curve.abscissa, curve.errors[:, 0], per)],
    )
    f = curve.fits[0]
    w.fit("fig3_loglog", f)
    w.csv("fig3_fit.csv", ["fit_slope", "fit_intercept", "fit_r2"], [(f.slope, f.intercept, f.r2)] if f else [("nan", "nan", "nan")])
    cont = eigendecompose(koopman_matrix_continuum(fmap, h, K)).eigenvalues
    rows = [("continuum", -1, i, v.real, v.imag) for i, v in enumerate(cont)]
    cells = [(N, s) for N in cfg.N_list for s in range(cfg.seeds)]
    for (N, s), ev in zip(cells, curve.extra["spectra"]):
        rows += [(str(N), s, i, v.real, v.imag) for i, v in enumerate(ev)]
    w.csv("fig3_spectra.csv", ["N", "seed", "rank", "re_lambda", "im_lambda"], rows)
    p = svg.Panel(f"data EDMD spectra, K={K}", "Re", "Im", equal=True).unit_circle()
    for (N, s), ev in zip(cells, curve.extra["spectra"]):
        if s == 0:
            p.add(ev.real, ev.imag, f"N={N}", style="points")
    p.add(cont.real, cont.imag, "continuum", style="points", color="#000000", opacity=0.35)
    q = svg.Panel("mean eigenvalue error vs N", "N", "error", logx=True, logy=True)
    q.add(curve.abscissa, curve.errors[:, 0], "mean over seeds")
    w.svg("fig3.svg", [p, q])
    return [cfg.seed + s for s in range(cfg.seeds)]


def cmd_opuc_diagnostics(cfg, w, workers=1):
    fmap = cfg.build_map()
    h = cfg.build_density(fmap)
    kb = cfg.K_big
    m = multiplication_matrix(h, kb)
    sz = szego_factor(h, kb)
    s, sp = diagonal_deviations(sz, m)
    ki = interior_order(kb)
    ks = np.arange(-ki + 1, ki)
    theta = np.array([abs(sz.theta_plus[int(k)]) for k in ks])
    w.csv("opuc_s.csv", ["k", "s_k", "s_prime_k", "theta_coeff_abs"], list(zip(ks, s, sp, theta)))
    w.note(f"max interior |s'_k| = {np.max(np.abs(sp)):.3e}")
    pos = ks >= 0
    tfit = fit_log_linear(ks[pos], theta[pos])
    w.fit("theta_plus_decay", tfit)
    pair = cholesky_interleaved(m)
    sigma, tau = BeurlingWeight.hardy(cfg.sigma_t), BeurlingWeight.hardy(cfg.tau_t)
    rows = []
    for K in cfg.ratio_K:
        if 4 * K > kb:
            w.note(f"ratio at K={K} skipped: needs K <= K_big/4")
            continue
        rows.append((K,) + projection_error_ratio(h, sigma, tau, K, kb, pair=pair))
    w.csv("opuc_ratio.csv", ["K", "lhs", "rhs", "ratio"], rows)
    tri = []
    for order in (kb // 4, kb // 2, kb):
        p = cholesky_interleaved(multiplication_matrix(h, order))
        tri.append((order, triangular_norm_diagnostic(p, BeurlingWeight.hardy(cfg.tau_t))))
    w.csv("opuc_triangular.csv", ["K_big", "max_weighted_norm"], tri)
    pa = svg.Panel("diagonal deviations", "k", "|s_k|", logy=True)
    pa.add(ks, np.abs(s), "s_k")
    pb = svg.Panel("theta+ coefficients", "k", "|coeff|", logy=True)
    pb.add(ks[pos], theta[pos])
    w.svg("opuc.svg", [pa, pb])
    return [cfg.seed]


COMMANDS = {
    "resonances": cmd_resonances,
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "opuc-diagnostics": cmd_opuc_diagnostics,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="edmdlab", description="EDMD experiments for expanding circle maps")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment config file (INI)")
    ap.add_argument("--out", help="output directory (default: $EDMDLAB_OUT, then the config's [output] directory)")
    ap.add_argument("--workers", type=int, default=1, help="concurrent experiment cells")
    ap.add_argument("--seed", type=int, help="override the config's base seed")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or os.environ.get("EDMDLAB_OUT") or cfg.output_dir
    w = Writer(out)
    try:
        with np.errstate(over="ignore", under="ignore"):
            seeds = COMMANDS[args.command](cfg, w, workers=args.workers)
    except (ConfigError, NotExpandingError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        with open(os.path.join(out, "failure.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"command: {args.command}\nconfig:\n{dump_config(cfg)}\n")
            fh.write(traceback.format_exc())
        print(f"numerical failure: {exc} (details in {os.path.join(out, 'failure.txt')})", file=sys.stderr)
        return 3
    w.manifest(cfg, args.command, seeds)
    print(f"wrote {len(w.artifacts)} files to {out}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
