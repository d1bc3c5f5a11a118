"""Minimal SVG line charts for benchmark summaries (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 560, 380
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 50


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= step), default=step)
    start = math.floor(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        if v >= lo - 1e-9 * step:
            out.append(round(v, 12))
        v += step
    return out


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, log: bool = False) -> str:
    """Render ``{label: [(x, y), ...]}`` as an SVG document.

    Non-positive values are dropped on a log axis.
    """
    pts = {k: [(float(x), float(y)) for x, y in v if y is not None and (not log or y > 0)] for k, v in series.items()}
    xs = [x for v in pts.values() for x, _ in v] or [0.0, 1.0]
    ys = [y for v in pts.values() for _, y in v] or [1.0]
    f = (lambda y: math.log10(y)) if log else (lambda y: y)
    x0, x1 = min(xs), max(xs)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    fy = [f(y) for y in ys]
    y0, y1 = min(fy), max(fy)
    if log:
        y0, y1 = math.floor(y0), math.ceil(y1)
    else:
        y0 = min(0.0, y0)
    if y1 <= y0:
        y1 = y0 + 1
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (f(y) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for x in sorted(set(xs)):
        out.append(f'<text x="{sx(x):.1f}" y="{TOP + ph + 18}" text-anchor="middle">{x:g}</text>')
    yt = [10.0**e for e in range(int(y0), int(y1) + 1)] if log else _ticks(y0, y1)
    for y in yt:
        py = sy(y)
        out.append(f'<line x1="{LEFT}" y1="{py:.1f}" x2="{LEFT + pw}" y2="{py:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{py + 4:.1f}" text-anchor="end">{y:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {TOP + ph / 2})">'
        f"{escape(ylabel + (' (log)' if log else ''))}</text>"
    )
    for n, (label, v) in enumerate(pts.items()):
        colour = PALETTE[n % len(PALETTE)]
        v = sorted(v)
        if v:
            path = " ".join(f"{'M' if j == 0 else 'L'}{sx(x):.1f},{sy(y):.1f}" for j, (x, y) in enumerate(v))
            out.append(f'<path d="{path}" fill="none" stroke="{colour}" stroke-width="2"/>')
            for x, y in v:
                out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{colour}"/>')
        ly = TOP + 16 * n + 8
        out.append(f'<line x1="{W - RIGHT + 12}" y1="{ly}" x2="{W - RIGHT + 32}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 38}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def benchmark_figures(aggregates: dict) -> dict[str, str]:
    """Region counts, wall time and transfers against ``M``."""
    Ms = sorted(aggregates, key=int)
    cr, tm, tf = {}, {}, {}
    for M in Ms:
        for kind, cell in aggregates[M].items():
            if "mean_total_wall_time" not in cell:
                continue
            tm.setdefault(kind, []).append((int(M), cell["mean_total_wall_time"]))
            tf.setdefault(kind, []).append((int(M), cell["mean_total_transfers"]))
            if cell.get("median_total_CR") is not None:
                cr.setdefault("median total", {})[int(M)] = cell["median_total_CR"]
    return {
        "critical_regions.svg": line_chart(
            {k: sorted(v.items()) for k, v in cr.items()}, "Critical regions per plant", "subsystems M", "regions", log=True
        ),
        "computation_time.svg": line_chart(tm, "Closed-loop computation time", "subsystems M", "seconds", log=True),
        "transfers.svg": line_chart(tf, "Data transfer instances", "subsystems M", "transfers", log=True),
    }
