"""Minimal log-log scatter plots written as SVG text."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN = 56


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(fit, title: str = "") -> str:
    """Scatter of ``fit.points`` (natural logs) with the fitted line, base-10 axes.

    ``fit`` needs ``points``, ``slope``, ``intercept`` and ``r2`` attributes.
    """
    ln10 = math.log(10.0)
    xs = [p[0] / ln10 for p in fit.points]
    ys = [p[1] / ln10 for p in fit.points]
    line_y = [(fit.slope * p[0] + fit.intercept) / ln10 for p in fit.points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + line_y), max(ys + line_y)
    # pad the box so points never sit on the frame
    px = max(0.05 * (x1 - x0), 0.05)
    py = max(0.05 * (y1 - y0), 0.05)
    x0, x1, y0, y1 = x0 - px, x1 + px, y0 - py, y1 + py

    def sx(v):
        return MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" '
        'fill="none" stroke="black"/>',
    ]
    for k in _decades(x0, x1):
        if x0 <= k <= x1:
            out.append(f'<line x1="{sx(k):.2f}" y1="{HEIGHT - MARGIN}" x2="{sx(k):.2f}" y2="{MARGIN}" stroke="#ddd"/>')
            out.append(f'<text x="{sx(k):.2f}" y="{HEIGHT - MARGIN + 16}" font-size="11" text-anchor="middle">1e{k}</text>')
    for k in _decades(y0, y1):
        if y0 <= k <= y1:
            out.append(f'<line x1="{MARGIN}" y1="{sy(k):.2f}" x2="{WIDTH - MARGIN}" y2="{sy(k):.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{MARGIN - 6}" y="{sy(k) + 4:.2f}" font-size="11" text-anchor="end">1e{k}</text>')
    i0, i1 = xs.index(min(xs)), xs.index(max(xs))
    out.append(
        f'<line x1="{sx(xs[i0]):.2f}" y1="{sy(line_y[i0]):.2f}" x2="{sx(xs[i1]):.2f}" y2="{sy(line_y[i1]):.2f}" '
        'stroke="#c03" stroke-width="1.5"/>'
    )
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3.5" fill="#036"/>')
    label = f"{title}  slope {fit.slope:.3f}  r2 {fit.r2:.4f}"
    out.append(f'<text x="{WIDTH / 2:.0f}" y="{MARGIN - 16}" font-size="13" text-anchor="middle">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
