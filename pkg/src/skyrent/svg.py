"""Minimal SVG chart emitter.

Output is a pure function of the data: fixed float formatting, no
timestamps, no random ids, so re-rendering unchanged data gives identical
bytes.
"""

from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 360
MARGIN = (56, 24, 24, 48)  # left, right, top, bottom
PALETTE = ["#1b7837", "#d6a100", "#b2182b"]


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Frame:
    def __init__(self, xlim, ylim, width=W, height=H, margin=MARGIN):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.width, self.height = width, height
        self.left, self.right, self.top, self.bottom = margin

    def px(self, x):
        span = self.width - self.left - self.right
        return self.left + (x - self.x0) / (self.x1 - self.x0) * span

    def py(self, y):
        span = self.height - self.top - self.bottom
        return self.height - self.bottom - (y - self.y0) / (self.y1 - self.y0) * span


def _document(body: list, width=W, height=H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _axes(fr: _Frame, title: str, xlabel: str, ylabel: str, nticks: int = 5) -> list:
    out = []
    xb, yb = fr.height - fr.bottom, fr.left
    out.append(f'<line x1="{_f(yb)}" y1="{_f(xb)}" x2="{_f(fr.width - fr.right)}" y2="{_f(xb)}" stroke="black"/>')
    out.append(f'<line x1="{_f(yb)}" y1="{_f(fr.top)}" x2="{_f(yb)}" y2="{_f(xb)}" stroke="black"/>')
    for v in np.linspace(fr.x0, fr.x1, nticks):
        x = fr.px(v)
        out.append(f'<line x1="{_f(x)}" y1="{_f(xb)}" x2="{_f(x)}" y2="{_f(xb + 4)}" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(xb + 16)}" text-anchor="middle">{v:.4g}</text>')
    for v in np.linspace(fr.y0, fr.y1, nticks):
        y = fr.py(v)
        out.append(f'<line x1="{_f(yb - 4)}" y1="{_f(y)}" x2="{_f(yb)}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{_f(yb - 6)}" y="{_f(y + 4)}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{_f(fr.width / 2)}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{_f((fr.left + fr.width - fr.right) / 2)}" y="{_f(fr.height - 8)}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    cy = (fr.top + xb) / 2
    out.append(f'<text x="14" y="{_f(cy)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_f(cy)})">{escape(ylabel)}</text>')
    return out


def scatter_svg(xs, ys, title="", xlabel="", ylabel="", xlim=None) -> str:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xlim = xlim or ((float(xs.min()), float(xs.max())) if len(xs) else (0.0, 1.0))
    ylim = (float(ys.min()), float(ys.max())) if len(ys) else (0.0, 1.0)
    fr = _Frame(xlim, ylim)
    body = _axes(fr, title, xlabel, ylabel)
    for x, y in zip(xs, ys):
        body.append(f'<circle cx="{_f(fr.px(x))}" cy="{_f(fr.py(y))}" r="3" fill="#2166ac" fill-opacity="0.8"/>')
    return _document(body)


def histograms_svg(histograms: list, labels: list, title="", xlabel="hue (degrees)",
                   ylabel="count") -> str:
    """Side-by-side panels, one per histogram, each with bars over [0, 360)."""
    n = max(len(histograms), 1)
    width = W * n
    body = []
    for i, (hist, label) in enumerate(zip(histograms, labels)):
        counts = np.asarray(hist.counts)
        bw = hist.bin_width
        fr = _Frame((0.0, 360.0), (0.0, float(max(counts.max(), 1) if len(counts) else 1)),
                    width=W, height=H)
        panel = _axes(fr, label, xlabel, ylabel)
        for j, c in enumerate(counts):
            if c == 0:
                continue
            x0, x1 = fr.px(j * bw), fr.px((j + 1) * bw)
            y = fr.py(float(c))
            hue = (j + 0.5) * bw
            panel.append(f'<rect x="{_f(x0)}" y="{_f(y)}" width="{_f(x1 - x0)}" '
                         f'height="{_f(fr.py(0.0) - y)}" fill="hsl({_f(hue)},80%,45%)"/>')
        body.append(f'<g transform="translate({i * W},0)">')
        body.extend(panel)
        body.append("</g>")
    if title:
        body.append(f'<text x="{_f(width / 2)}" y="{_f(H - 2)}" text-anchor="middle" font-size="10">'
                    f'{escape(title)}</text>')
    return _document(body, width=width)


def heatmap_svg(grid, title="", xlabel="hue (degrees)", ylabel="rent") -> str:
    counts = np.asarray(grid.counts)
    fr = _Frame((float(grid.hue_edges[0]), float(grid.hue_edges[-1])),
                (float(grid.rent_edges[0]), float(grid.rent_edges[-1])))
    body = _axes(fr, title, xlabel, ylabel)
    peak = max(int(counts.max()) if counts.size else 0, 1)
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            c = int(counts[i, j])
            if c == 0:
                continue
            x0, x1 = fr.px(grid.hue_edges[i]), fr.px(grid.hue_edges[i + 1])
            y0 = fr.py(grid.rent_edges[j + 1]) if fr.y1 != fr.y0 else fr.top
            y1 = fr.py(grid.rent_edges[j])
            shade = 1.0 - c / peak
            level = int(round(40 + 200 * shade))
            body.append(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(x1 - x0)}" '
                        f'height="{_f(max(y1 - y0, 1.0))}" fill="rgb({level},{level},255)"/>')
    return _document(body)
