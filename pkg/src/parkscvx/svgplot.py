"""Static SVG figures rendered from a run artifact (never from solver state)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .scenarios import Scenario, point_violation

SEGMENT_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
WIDTH = 720
MARGIN = 40
OBSTACLE_CELL = 0.1  # m, raster step for drawing obstacle regions


class _Frame:
    """World-to-pixel map with equal axis scaling and y pointing up."""

    def __init__(self, lo, hi, width=WIDTH, margin=MARGIN):
        span = np.maximum(np.asarray(hi, float) - np.asarray(lo, float), 1e-6)
        self.scale = (width - 2 * margin) / span[0]
        self.lo, self.margin = np.asarray(lo, float), margin
        self.width = width
        self.height = int(math.ceil(span[1] * self.scale + 2 * margin))

    def __call__(self, x, y):
        return (self.margin + (x - self.lo[0]) * self.scale,
                self.height - self.margin - (y - self.lo[1]) * self.scale)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _polyline(pts, **attrs) -> str:
    a = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
    return f'<polyline points="{coords}" fill="none" {a}/>'


def _header(w, h, title) -> list:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f"<title>{escape(title)}</title>",
            '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
            'patternTransform="rotate(45)"><rect width="6" height="6" fill="#eeeeee"/>'
            '<line x1="0" y1="0" x2="0" y2="6" stroke="#555555" stroke-width="1.5"/></pattern></defs>',
            f'<rect width="{w}" height="{h}" fill="white"/>']


def _extent(s: Scenario, point_sets) -> tuple:
    pts = np.concatenate([np.atleast_2d(p)[:, :2] for p in point_sets if len(p)])
    lo, hi = pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0
    for comp, b in ((0, s.x_bounds), (1, s.y_bounds)):
        if b is not None:
            lo[comp], hi[comp] = b
    return lo, hi


def _obstacles(s: Scenario, lo, hi, f: _Frame) -> list:
    """Hatched rectangles covering inadmissible cells, merged along rows."""
    if not s.stcs:
        return []
    xs = np.arange(lo[0], hi[0], OBSTACLE_CELL)
    ys = np.arange(lo[1], hi[1], OBSTACLE_CELL)
    out = []
    for y in ys:
        cy = y + OBSTACLE_CELL / 2
        pts = np.column_stack([xs + OBSTACLE_CELL / 2, np.full(xs.size, cy), np.zeros(xs.size)])
        bad = np.array([point_violation(s, p) > 0 for p in pts])
        i = 0
        while i < xs.size:
            if not bad[i]:
                i += 1
                continue
            j = i
            while j + 1 < xs.size and bad[j + 1]:
                j += 1
            x0, y0 = f(xs[i], y + OBSTACLE_CELL)
            x1, y1 = f(xs[j] + OBSTACLE_CELL, y)
            out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                       f'height="{_fmt(y1 - y0)}" fill="url(#hatch)" stroke="none"/>')
            i = j + 1
    return out


def trajectory_svg(artifact: dict) -> str:
    """Segments color-coded, obstacles hatched, Reeds-Shepp reference dashed."""
    s = Scenario.from_dict(artifact["scenario"])
    dense = [np.asarray(d, float) for d in artifact["dense"]]
    rs = np.asarray(artifact.get("rs_baseline", {}).get("samples", []), float)
    lo, hi = _extent(s, dense + ([rs] if rs.size else []))
    f = _Frame(lo, hi)
    body = _header(f.width, f.height, f"{s.name}: {artifact.get('status', '')}")
    body += _obstacles(s, lo, hi, f)
    for comp, b in ((0, s.x_bounds), (1, s.y_bounds)):
        if b is None:
            continue
        for v in b:
            ends = [(v, lo[1]), (v, hi[1])] if comp == 0 else [(lo[0], v), (hi[0], v)]
            body.append(_polyline([f(*e) for e in ends], stroke="#000000", stroke_width="1"))
    if rs.size:
        body.append(_polyline([f(x, y) for x, y in rs[:, :2]], stroke="#7f7f7f", stroke_width="1.5",
                              stroke_dasharray="6,4"))
    arrow = 0.35
    for i, (seg, d) in enumerate(zip(artifact["segments"], dense)):
        color = SEGMENT_COLORS[i % len(SEGMENT_COLORS)]
        body.append(_polyline([f(x, y) for x, y in d[:, :2]], stroke=color, stroke_width="2"))
        for x, y, th in np.asarray(seg["states"], float):
            px, py = f(x, y)
            qx, qy = f(x + arrow * math.cos(th), y + arrow * math.sin(th))
            body.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" fill="{color}"/>')
            body.append(f'<line x1="{_fmt(px)}" y1="{_fmt(py)}" x2="{_fmt(qx)}" y2="{_fmt(qy)}" '
                        f'stroke="{color}" stroke-width="1"/>')
    for label, q, shape in (("start", s.P0, "#000000"), ("goal", s.P1, "#ff7f0e")):
        px, py = f(q.x_w, q.y_w)
        body.append(f'<rect x="{_fmt(px - 4)}" y="{_fmt(py - 4)}" width="8" height="8" fill="{shape}"/>')
        body.append(f'<text x="{_fmt(px + 6)}" y="{_fmt(py - 6)}" font-size="11" '
                    f'font-family="sans-serif">{label}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def _panel(x0, y0, w, h, xs, ys, title, log=True) -> list:
    ys = np.asarray(ys, float)
    ok = np.isfinite(ys) & ((ys > 0) if log else True)
    out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000000"/>',
           f'<text x="{x0 + 4}" y="{y0 + 14}" font-size="12" font-family="sans-serif">{escape(title)}</text>']
    if not ok.any():
        return out
    v = np.log10(ys[ok]) if log else ys[ok]
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    xv = np.asarray(xs, float)[ok]
    xl, xh = float(min(xs)), float(max(max(xs), min(xs) + 1))
    pts = [(x0 + (a - xl) / (xh - xl) * w, y0 + h - (b - lo) / (hi - lo) * (h - 20)) for a, b in zip(xv, v)]
    out.append(_polyline(pts, stroke="#1f77b4", stroke_width="1.5"))
    label = (lambda q: f"1e{q:.1f}") if log else (lambda q: f"{q:.3g}")
    out.append(f'<text x="{x0 + w - 4}" y="{y0 + 14}" font-size="10" text-anchor="end" '
               f'font-family="sans-serif">max {label(hi)}  min {label(lo)}</text>')
    return out


def history_svg(history: list) -> str:
    """Penalized cost, virtual-control norm and trust radius against iteration."""
    rows = [h for h in history if "cost_ref" in h]
    if not rows:
        raise ValueError("history has no completed iterations")
    it = [h["iteration"] for h in rows]
    panels = [
        ("penalized cost (log10)", [h["cost_candidate"] if h["accepted"] else h["cost_ref"] for h in rows]),
        ("virtual control l1 (log10)", [h["nu_l1"] for h in rows]),
        ("trust radius (log10)", [h["trust_radius"] for h in rows]),
    ]
    w, h, gap = WIDTH - 2 * MARGIN, 150, 20
    height = MARGIN * 2 + len(panels) * (h + gap)
    body = _header(WIDTH, height, "convergence history")
    for i, (title, ys) in enumerate(panels):
        body += _panel(MARGIN, MARGIN + i * (h + gap), w, h, it, ys, title)
    body.append(f'<text x="{WIDTH // 2}" y="{height - 10}" font-size="12" text-anchor="middle" '
                f'font-family="sans-serif">iteration</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"
