"""Minimal deterministic SVG emitters (heatmaps, line plots, histograms).

Hand-rolled on purpose: output bytes depend only on the data, so pipeline
reruns are byte-identical.
"""

from __future__ import annotations

import numpy as np

_HEADER = ('<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           'viewBox="0 0 {w} {h}">\n')


def _diverging_color(v, vmax):
    """Blue-white-red scale centered at 0."""
    if vmax <= 0:
        return "#ffffff"
    t = max(-1.0, min(1.0, v / vmax))
    if t >= 0:
        r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
    else:
        r, g, b = int(255 * (1 + t)), int(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(path, M, title=""):
    M = np.asarray(M, dtype=float)
    rows, cols = M.shape
    cell = max(4, min(20, 800 // max(rows, cols)))
    w, h = cols * cell + 20, rows * cell + 40
    vmax = float(np.abs(M).max()) if M.size else 1.0
    parts = [_HEADER.format(w=w, h=h)]
    if title:
        parts.append(f'<text x="10" y="20" font-size="14">{title}</text>\n')
    for i in range(rows):
        for j in range(cols):
            color = _diverging_color(M[i, j], vmax)
            parts.append(
                f'<rect x="{10 + j * cell}" y="{30 + i * cell}" '
                f'width="{cell}" height="{cell}" fill="{color}"/>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.writelines(parts)


def lineplot_svg(path, x, series, title=""):
    """series: dict name -> y values on common x."""
    x = np.asarray(x, dtype=float)
    w, h, pad = 640, 400, 50
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (w - 2 * pad)

    def sy(v):
        return h - pad - (v - y_lo) / (y_hi - y_lo) * (h - 2 * pad)

    colors = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [_HEADER.format(w=w, h=h)]
    if title:
        parts.append(f'<text x="10" y="20" font-size="14">{title}</text>\n')
    parts.append(f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="#000"/>\n')
    parts.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="#000"/>\n')
    for idx, (name, y) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, np.asarray(y, dtype=float)))
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
        parts.append(f'<text x="{w - pad + 4}" y="{pad + 14 * idx + 10}" '
                     f'font-size="10" fill="{color}">{name}</text>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.writelines(parts)


def spectrum_svg(path, eigenvalues, mp_lower, mp_upper, density_x=None,
                 density_y=None, title=""):
    """Eigenvalue histogram with MP bulk edges (and optional density curve)."""
    lam = np.asarray(eigenvalues, dtype=float)
    w, h, pad = 640, 400, 50
    x_hi = max(float(lam.max()) if lam.size else 1.0, mp_upper) * 1.05
    x_hi = x_hi if x_hi > 0 else 1.0
    n_bins = 40
    edges = np.linspace(0.0, x_hi, n_bins + 1)
    counts, _ = np.histogram(lam, bins=edges)
    c_hi = max(int(counts.max()), 1)

    def sx(v):
        return pad + v / x_hi * (w - 2 * pad)

    def sy(v):
        return h - pad - v / c_hi * (h - 2 * pad)

    parts = [_HEADER.format(w=w, h=h)]
    if title:
        parts.append(f'<text x="10" y="20" font-size="14">{title}</text>\n')
    for k in range(n_bins):
        if counts[k]:
            x0, x1 = sx(edges[k]), sx(edges[k + 1])
            y0 = sy(counts[k])
            parts.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
                         f'height="{h - pad - y0:.2f}" fill="#9ecae1"/>\n')
    for v, color in ((mp_lower, "#d62728"), (mp_upper, "#d62728")):
        parts.append(f'<line x1="{sx(v):.2f}" y1="{pad}" x2="{sx(v):.2f}" '
                     f'y2="{h - pad}" stroke="{color}" stroke-dasharray="4 2"/>\n')
    if density_x is not None and density_y is not None:
        dy = np.asarray(density_y, dtype=float)
        if dy.max() > 0:
            dy = dy / dy.max() * c_hi
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(density_x, dy))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#2ca02c"/>\n')
    parts.append(f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="#000"/>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.writelines(parts)
