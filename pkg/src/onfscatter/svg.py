"""Minimal self-contained SVG line plots and heat maps."""

from __future__ import annotations

import html

import numpy as np

W, H = 640, 420
ML, MR, MT, MB = 70, 20, 40, 55
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _ticks(lo, hi, n=5):
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _fmt(v):
    return f"{v:.6g}"


def _frame(title, xlabel, ylabel, xlim, ylim, desc=""):
    x0, x1 = xlim
    y0, y1 = ylim
    pw, ph = W - ML - MR, H - MT - MB
    sx = lambda x: ML + (x - x0) / (x1 - x0) * pw
    sy = lambda y: MT + ph - (y - y0) / (y1 - y0) * ph
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<desc>{html.escape(desc)}</desc>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{html.escape(title)}</text>',
        f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{MT + ph}" x2="{sx(t):.2f}" y2="{MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{MT + ph + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ML - 5}" y1="{sy(t):.2f}" x2="{ML}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{ML - 8}" y="{sy(t) + 4:.2f}" text-anchor="end" font-size="11" font-family="sans-serif">{_fmt(t)}</text>')
    out.append(f'<text x="{ML + pw / 2}" y="{H - 12}" text-anchor="middle" font-size="13" font-family="sans-serif">{html.escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MT + ph / 2}" text-anchor="middle" font-size="13" font-family="sans-serif" '
        f'transform="rotate(-90 16 {MT + ph / 2})">{html.escape(ylabel)}</text>'
    )
    return out, sx, sy


def line_plot(series, xlabel="", ylabel="", title="", desc="", markers=()) -> str:
    """``series`` is a list of (x, y, label); NaNs break the line.
    ``markers`` are x positions drawn as dashed verticals."""
    xs = np.concatenate([np.asarray(s[0], float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.array([0.0, 1.0])
    fin = np.isfinite(xs) & np.isfinite(ys)
    if not np.any(fin):
        xs, ys, fin = np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([True, True])
    x0, x1 = float(np.min(xs[fin])), float(np.max(xs[fin]))
    y0, y1 = float(np.min(ys[fin])), float(np.max(ys[fin]))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    out, sx, sy = _frame(title, xlabel, ylabel, (x0, x1), (y0 - pad, y1 + pad), desc)
    for k, (x, y, label) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        color = COLORS[k % len(COLORS)]
        ok = np.isfinite(x) & np.isfinite(y)
        runs = np.split(np.arange(x.size), np.nonzero(np.diff(ok.astype(int)))[0] + 1)
        for run in runs:
            if run.size < 2 or not ok[run[0]]:
                continue
            step = max(1, run.size // 2000)
            pts = " ".join(f"{sx(x[i]):.2f},{sy(y[i]):.2f}" for i in run[::step])
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>')
        ly = MT + 14 + 15 * k
        out.append(f'<line x1="{W - MR - 130}" y1="{ly - 4}" x2="{W - MR - 110}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - MR - 105}" y="{ly}" font-size="11" font-family="sans-serif">{html.escape(str(label))}</text>')
    for m in markers:
        if x0 <= m <= x1:
            out.append(f'<line x1="{sx(m):.2f}" y1="{MT}" x2="{sx(m):.2f}" y2="{H - MB}" stroke="gray" stroke-dasharray="4 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(matrix, x, y, xlabel="", ylabel="", title="", desc="", max_cells=160) -> str:
    """Gray-scale image of ``matrix[iy, ix]``."""
    m = np.asarray(matrix, float)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    sy_step = max(1, m.shape[0] // max_cells)
    sx_step = max(1, m.shape[1] // max_cells)
    m = m[::sy_step, ::sx_step]
    x = x[::sx_step]
    y = y[::sy_step]
    x0, x1 = float(x[0]), float(x[-1]) if x.size > 1 else float(x[0]) + 1
    y0, y1 = float(y[0]), float(y[-1]) if y.size > 1 else float(y[0]) + 1
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    out, sx, sy = _frame(title, xlabel, ylabel, (x0, x1), (y0, y1), desc)
    top = float(np.max(m)) if m.size and np.max(m) > 0 else 1.0
    cw = (W - ML - MR) / max(1, m.shape[1])
    ch = (H - MT - MB) / max(1, m.shape[0])
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            g = int(255 * (1 - min(1.0, m[i, j] / top)))
            if g >= 250:
                continue
            out.append(
                f'<rect x="{ML + j * cw:.2f}" y="{H - MB - (i + 1) * ch:.2f}" width="{cw + 0.3:.2f}" '
                f'height="{ch + 0.3:.2f}" fill="rgb({g},{g},{g})"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
