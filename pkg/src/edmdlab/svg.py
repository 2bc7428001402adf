"""Minimal standalone SVG 1.1 line and scatter charts with optional log axes."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class Panel:
    """One set of axes. Series are ``(x, y, label, style)`` with style ``line`` or ``points``."""

    def __init__(self, title="", xlabel="", ylabel="", logx=False, logy=False, equal=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.logx, self.logy, self.equal = logx, logy, equal
        self.series = []
        self.circle = False

    def add(self, x, y, label="", style="line", color=None, opacity=1.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.series.append((x, y, label, style, color, opacity))
        return self

    def unit_circle(self):
        self.circle = True
        return self

    def _tx(self, v, log):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log10(v) if log else v

    def _limits(self):
        xs, ys = [], []
        for x, y, *_ in self.series:
            tx, ty = self._tx(x, self.logx), self._tx(y, self.logy)
            ok = np.isfinite(tx) & np.isfinite(ty)
            xs.append(tx[ok])
            ys.append(ty[ok])
        if self.circle:
            xs.append(np.array([-1.0, 1.0]))
            ys.append(np.array([-1.0, 1.0]))
        xs = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        if xs.size == 0:
            xs = np.array([0.0, 1.0])
        if ys.size == 0:
            ys = np.array([0.0, 1.0])
        lim = []
        for a in (xs, ys):
            lo, hi = float(a.min()), float(a.max())
            if hi - lo < 1e-12:
                lo, hi = lo - 0.5, hi + 0.5
            pad = 0.05 * (hi - lo)
            lim.append((lo - pad, hi + pad))
        if self.equal:
            lo = min(lim[0][0], lim[1][0])
            hi = max(lim[0][1], lim[1][1])
            lim = [(lo, hi), (lo, hi)]
        return lim

    def render(self, ox, oy, w, h):
        (x0, x1), (y0, y1) = self._limits()
        left, bottom, top, right = 60, 40, 30, 10
        pw, ph = w - left - right, h - top - bottom

        def px(v):
            return ox + left + (v - x0) / (x1 - x0) * pw

        def py(v):
            return oy + top + (y1 - v) / (y1 - y0) * ph

        out = [
            f'<rect x="{ox + left}" y="{oy + top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
            f'<text x="{ox + left + pw / 2:.1f}" y="{oy + 18}" text-anchor="middle" font-size="13">{escape(self.title)}</text>',
            f'<text x="{ox + left + pw / 2:.1f}" y="{oy + h - 6}" text-anchor="middle" font-size="11">{escape(self.xlabel)}</text>',
            f'<text x="{ox + 12}" y="{oy + top + ph / 2:.1f}" text-anchor="middle" font-size="11" '
            f'transform="rotate(-90 {ox + 12} {oy + top + ph / 2:.1f})">{escape(self.ylabel)}</text>',
        ]
        for axis, (lo, hi), log in (("x", (x0, x1), self.logx), ("y", (y0, y1), self.logy)):
            for tv in _ticks(lo, hi, log):
                lab = f"1e{int(round(tv))}" if log else f"{tv:.3g}"
                if axis == "x":
                    out.append(f'<line x1="{px(tv):.1f}" y1="{oy + top + ph}" x2="{px(tv):.1f}" y2="{oy + top + ph + 4}" stroke="#444"/>')
                    out.append(f'<text x="{px(tv):.1f}" y="{oy + top + ph + 15}" text-anchor="middle" font-size="9">{lab}</text>')
                else:
                    out.append(f'<line x1="{ox + left - 4}" y1="{py(tv):.1f}" x2="{ox + left}" y2="{py(tv):.1f}" stroke="#444"/>')
                    out.append(f'<text x="{ox + left - 6}" y="{py(tv) + 3:.1f}" text-anchor="end" font-size="9">{lab}</text>')
        if self.circle:
            th = np.linspace(0, 2 * np.pi, 181)
            pts = " ".join(f"{px(c):.2f},{py(s):.2f}" for c, s in zip(np.cos(th), np.sin(th)))
            out.append(f'<polyline points="{pts}" fill="none" stroke="#bbb"/>')
        for i, (x, y, label, style, color, opacity) in enumerate(self.series):
            color = color or PALETTE[i % len(PALETTE)]
            tx, ty = self._tx(x, self.logx), self._tx(y, self.logy)
            ok = np.isfinite(tx) & np.isfinite(ty)
            if style == "points":
                for a, b in zip(tx[ok], ty[ok]):
                    out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{color}" fill-opacity="{opacity}"/>')
            elif ok.sum() > 1:
                pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tx[ok], ty[ok]))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-opacity="{opacity}" stroke-width="1.2"/>')
            if label:
                ly = oy + top + 12 + 12 * i
                out.append(f'<text x="{ox + left + pw - 4}" y="{ly}" text-anchor="end" font-size="9" fill="{color}">{escape(label)}</text>')
        return out


def _ticks(lo, hi, log):
    if log:
        a, b = math.ceil(lo), math.floor(hi)
        step = max(1, (b - a) // 6 + 1)
        return list(range(a, b + 1, step))
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / 5))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= 6:
            step *= m
            break
    return list(np.arange(math.ceil(lo / step) * step, hi, step))


def render(panels, width=480, height=360):
    """SVG document text with the panels laid out side by side."""
    total = width * len(panels)
    body = []
    for i, p in enumerate(panels):
        body.extend(p.render(i * width, 0, width, height))
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{height}" '
        f'viewBox="0 0 {total} {height}" font-family="sans-serif">\n'
        f'<rect width="{total}" height="{height}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"
