"""Minimal hand-rolled SVG plots.

CSV/JSON reports are the contract; these line and bar charts are a best-effort
visual companion. Output is plain deterministic markup so repeated runs stay
byte-identical.
"""

from __future__ import annotations

from pathlib import Path

WIDTH, HEIGHT = 640, 400
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(value: float, lo: float, hi: float, out_lo: float, out_hi: float) -> float:
    if hi == lo:
        return (out_lo + out_hi) / 2
    return out_lo + (value - lo) * (out_hi - out_lo) / (hi - lo)


def _axes(title: str, x_label: str, y_label: str, y_lo: float, y_hi: float) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" '
        f'stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{x_label}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {HEIGHT // 2})">{y_label}</text>',
        f'<text x="{MARGIN - 6}" y="{HEIGHT - MARGIN + 4}" text-anchor="end" '
        f'font-size="10" font-family="sans-serif">{y_lo:.2f}</text>',
        f'<text x="{MARGIN - 6}" y="{MARGIN + 4}" text-anchor="end" '
        f'font-size="10" font-family="sans-serif">{y_hi:.2f}</text>',
    ]
    return parts


def line_plot(series: dict[str, list[float]], path: str | Path, title: str,
              x_label: str = "Layer index", y_label: str = "Score") -> Path:
    values = [v for curve in series.values() for v in curve]
    y_lo = min(0.0, min(values, default=0.0))
    y_hi = max(1.0, max(values, default=1.0))
    parts = _axes(title, x_label, y_label, y_lo, y_hi)
    n = max((len(curve) for curve in series.values()), default=0)
    for color_i, (label, curve) in enumerate(series.items()):
        color = PALETTE[color_i % len(PALETTE)]
        points = []
        for i, value in enumerate(curve):
            x = _scale(i, 0, max(n - 1, 1), MARGIN, WIDTH - MARGIN)
            y = _scale(value, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
            points.append(f"{x:.1f},{y:.1f}")
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{" ".join(points)}"/>')
        parts.append(f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * color_i + 10}" '
                     f'font-size="10" font-family="sans-serif" fill="{color}">{label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def bar_plot(values: list[float], path: str | Path, title: str,
             x_label: str = "Layer index", y_label: str = "Count") -> Path:
    y_lo = 0.0
    y_hi = max(1.0, max(values, default=1.0))
    parts = _axes(title, x_label, y_label, y_lo, y_hi)
    n = max(len(values), 1)
    band = (WIDTH - 2 * MARGIN) / n
    for i, value in enumerate(values):
        x = MARGIN + i * band
        y = _scale(value, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        parts.append(f'<rect x="{x + band * 0.1:.1f}" y="{y:.1f}" '
                     f'width="{band * 0.8:.1f}" height="{HEIGHT - MARGIN - y:.1f}" '
                     f'fill="{PALETTE[0]}"/>')
        parts.append(f'<text x="{x + band / 2:.1f}" y="{HEIGHT - MARGIN + 14}" '
                     f'text-anchor="middle" font-size="10" font-family="sans-serif">{i}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
