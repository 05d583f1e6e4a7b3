"""Bare-bones SVG line and scatter plots; enough for fit overlays and sweep clouds."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    step = 10 ** np.floor(np.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _fmt(v):
    return f"{v:.6g}"


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 420
    items: list = field(default_factory=list)

    def line(self, x, y, color=None, label=None, width=1.5):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, label, width))
        return self

    def scatter(self, x, y, color=None, label=None, size=2.5):
        self.items.append(("dots", np.asarray(x, float), np.asarray(y, float), color, label, size))
        return self

    def band(self, x, lo, hi, color=None, label=None):
        x = np.asarray(x, float)
        self.items.append(("band", np.concatenate([x, x[::-1]]),
                           np.concatenate([np.asarray(lo, float), np.asarray(hi, float)[::-1]]),
                           color, label, 0))
        return self

    def _limits(self):
        xs = np.concatenate([it[1] for it in self.items]) if self.items else np.zeros(1)
        ys = np.concatenate([it[2] for it in self.items]) if self.items else np.zeros(1)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if not ok.any():
            return (0.0, 1.0), (0.0, 1.0)
        xs, ys = xs[ok], ys[ok]
        lims = []
        for a in (xs, ys):
            lo, hi = float(a.min()), float(a.max())
            pad = 0.05 * (hi - lo) if hi > lo else max(abs(lo), 1.0) * 0.05
            lims.append((lo - pad, hi + pad))
        return lims

    def render(self) -> str:
        ml, mr, mt, mb = 80, 20, 30, 50
        w, h = self.width - ml - mr, self.height - mt - mb
        (x0, x1), (y0, y1) = self._limits()
        sx = lambda v: ml + (v - x0) / (x1 - x0) * w
        sy = lambda v: mt + h - (v - y0) / (y1 - y0) * h
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" font-family="sans-serif" font-size="11">',
               f'<rect x="{ml}" y="{mt}" width="{w}" height="{h}" fill="none" stroke="#333"/>']
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{sx(t):.2f}" y1="{mt + h}" x2="{sx(t):.2f}" y2="{mt + h + 4}" '
                       f'stroke="#333"/><text x="{sx(t):.2f}" y="{mt + h + 16}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<line x1="{ml - 4}" y1="{sy(t):.2f}" x2="{ml}" y2="{sy(t):.2f}" '
                       f'stroke="#333"/><text x="{ml - 6}" y="{sy(t) + 4:.2f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="{ml + w / 2}" y="{self.height - 12}" text-anchor="middle">'
                   f'{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{mt + h / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + h / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{ml + w / 2}" y="18" text-anchor="middle" font-size="13">'
                   f'{escape(self.title)}</text>')
        for n, (kind, x, y, color, label, size) in enumerate(self.items):
            c = color or COLORS[n % len(COLORS)]
            ok = np.isfinite(x) & np.isfinite(y)
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
            if kind == "line":
                out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" '
                           f'stroke-width="{size}"/>')
            elif kind == "band":
                out.append(f'<polygon points="{pts}" fill="{c}" fill-opacity="0.25" stroke="none"/>')
            else:
                out.extend(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="{size}" fill="{c}"/>'
                           for a, b in zip(x[ok], y[ok]))
            if label:
                ly = mt + 14 + 14 * n
                out.append(f'<rect x="{ml + w - 150}" y="{ly - 8}" width="10" height="10" '
                           f'fill="{c}"/><text x="{ml + w - 135}" y="{ly + 1}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
