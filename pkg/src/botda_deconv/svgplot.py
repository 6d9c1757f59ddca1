"""Minimal SVG line and heat-map plots, enough to eyeball a figure offline."""
from __future__ import annotations

import html

import numpy as np

W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 70, 150, 30, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + step * 1e-9, step))


def _frame(title, xlabel, ylabel, xlim, ylim):
    x0, x1 = xlim
    y0, y1 = ylim
    pw, ph = W - PAD_L - PAD_R, H - PAD_T - PAD_B

    def sx(x):
        return PAD_L + (np.asarray(x) - x0) / (x1 - x0 or 1) * pw

    def sy(y):
        return PAD_T + ph - (np.asarray(y) - y0) / (y1 - y0 or 1) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{html.escape(title)}</text>',
           f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.1f}" y1="{PAD_T + ph}" x2="{sx(t):.1f}" y2="{PAD_T + ph + 4}" '
                   f'stroke="black"/><text x="{sx(t):.1f}" y="{PAD_T + ph + 16}" '
                   f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{PAD_L - 4}" y1="{sy(t):.1f}" x2="{PAD_L}" y2="{sy(t):.1f}" '
                   f'stroke="black"/><text x="{PAD_L - 6}" y="{sy(t) + 4:.1f}" '
                   f'text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{PAD_L + pw / 2}" y="{H - 12}" text-anchor="middle">{html.escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{PAD_T + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {PAD_T + ph / 2})">{html.escape(ylabel)}</text>')
    return out, sx, sy


def line_plot(series, title="", xlabel="", ylabel="", markers=False) -> str:
    """``series``: list of ``(label, x, y)``; NaNs break the line."""
    xs = np.concatenate([np.asarray(x, float) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, float) for _, _, y in series])
    ok = np.isfinite(ys) & np.isfinite(xs)
    if not ok.any():
        xs, ys, ok = np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([True, True])
    xlim = (xs[ok].min(), xs[ok].max())
    pad = 0.05 * (ys[ok].max() - ys[ok].min() or 1.0)
    ylim = (ys[ok].min() - pad, ys[ok].max() + pad)
    out, sx, sy = _frame(title, xlabel, ylabel, xlim, ylim)
    for i, (label, x, y) in enumerate(series):
        c = COLORS[i % len(COLORS)]
        x, y = np.asarray(x, float), np.asarray(y, float)
        seg = []
        for xi, yi in zip(sx(x), sy(y)):
            if np.isfinite(yi):
                seg.append(f"{xi:.1f},{yi:.1f}")
            elif seg:
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.3" points="{" ".join(seg)}"/>')
                seg = []
        if seg:
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.3" points="{" ".join(seg)}"/>')
        if markers:
            for xi, yi in zip(sx(x), sy(y)):
                if np.isfinite(yi):
                    out.append(f'<circle cx="{xi:.1f}" cy="{yi:.1f}" r="2.5" fill="{c}"/>')
        ly = PAD_T + 14 * i + 8
        out.append(f'<line x1="{W - PAD_R + 10}" y1="{ly}" x2="{W - PAD_R + 30}" y2="{ly}" '
                   f'stroke="{c}" stroke-width="2"/><text x="{W - PAD_R + 34}" y="{ly + 4}">'
                   f'{html.escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out)


def heatmap(z, x, y, title="", xlabel="", ylabel="", max_cells=(200, 120)) -> str:
    """``z[len(y), len(x)]`` as coloured cells (decimated to at most ``max_cells``)."""
    z = np.asarray(z, float)
    x, y = np.asarray(x, float), np.asarray(y, float)
    sxs = max(1, int(np.ceil(len(x) / max_cells[0])))
    sys_ = max(1, int(np.ceil(len(y) / max_cells[1])))
    z, x, y = z[::sys_, ::sxs], x[::sxs], y[::sys_]
    out, sx, sy = _frame(title, xlabel, ylabel, (x[0], x[-1]), (y[0], y[-1]))
    lo, hi = np.nanmin(z), np.nanmax(z)
    span = hi - lo or 1.0
    dx = (sx(x[-1]) - sx(x[0])) / max(len(x) - 1, 1)
    dy = (sy(y[0]) - sy(y[-1])) / max(len(y) - 1, 1)
    for j, yy in enumerate(y):
        for i, xx in enumerate(x):
            v = (z[j, i] - lo) / span
            if not np.isfinite(v):
                continue
            r, g, b = int(255 * min(1, 2 * v)), int(255 * (1 - abs(2 * v - 1))), int(255 * min(1, 2 - 2 * v))
            out.append(f'<rect x="{sx(xx) - dx / 2:.1f}" y="{sy(yy) - dy / 2:.1f}" width="{dx + 0.5:.1f}" '
                       f'height="{dy + 0.5:.1f}" fill="rgb({r},{g},{b})"/>')
    out.append(f'<text x="{W - PAD_R + 10}" y="{PAD_T + 10}">min {lo:.3g}</text>')
    out.append(f'<text x="{W - PAD_R + 10}" y="{PAD_T + 24}">max {hi:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out)
