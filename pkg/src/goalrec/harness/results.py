"""Result files: the accuracy CSV and an SVG accuracy-vs-observability chart."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .experiments import ResultRow

CSV_HEADER = ["method", "map_size", "observability", "eps_prime", "accuracy", "n", "seed"]

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _number(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def results_csv(rows: Sequence[ResultRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.method, r.map_size, _number(r.observability), _number(r.eps_prime),
                         f"{float(r.accuracy):.6f}", r.n, r.seed])
    return out.getvalue()


def parse_results_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected results header {header}")
    rows = []
    for rec in reader:
        method, size, obs, eps, acc, n, seed = rec
        n = int(n)
        rows.append(ResultRow(method, size, float(obs), float(eps), round(float(acc) * n), n, int(seed)))
    return rows


def series(rows: Sequence[ResultRow]) -> dict[str, list[tuple[float, float]]]:
    """Points per chart line; lines are split by condition when rows mix several."""
    conditions = {(r.map_size, r.eps_prime) for r in rows}
    lines: dict[str, list] = defaultdict(list)
    for r in rows:
        key = r.method
        if len(conditions) > 1:
            key = f"{r.method} ({r.map_size}, eps'={_number(r.eps_prime)})"
        lines[key].append((float(r.observability), float(r.accuracy)))
    return {k: sorted(v) for k, v in lines.items()}


def results_svg(rows: Sequence[ResultRow], width: int = 480, height: int = 320) -> str:
    margin = 48
    lines = series(rows)
    xs = [x for pts in lines.values() for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    span = (x_hi - x_lo) or 1.0

    def px(x):
        return margin + (x - x_lo) / span * (width - 2 * margin)

    def py(y):
        return height - margin - y * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{py(0)}" x2="{width - margin}" y2="{py(0)}" stroke="black"/>',
        f'<line x1="{margin}" y1="{py(0)}" x2="{margin}" y2="{py(1)}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">'
        f'observability (%)</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">accuracy</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{margin - 6}" y="{py(tick) + 4:.1f}" text-anchor="end" '
                     f'font-size="10">{tick:g}</text>')
    for k, (name, pts) in enumerate(sorted(lines.items())):
        colour = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}">'
                     f'<title>{escape(name)}</title></polyline>')
        parts.append(f'<text x="{width - margin + 4}" y="{margin + 14 * k}" font-size="10" '
                     f'fill="{colour}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_results(rows: Sequence[ResultRow], csv_path, svg_path=None) -> None:
    if not rows:
        raise ValueError("no result rows to write")
    Path(csv_path).write_text(results_csv(rows))
    if svg_path is not None:
        Path(svg_path).write_text(results_svg(rows))


def read_results(csv_path) -> list[ResultRow]:
    return parse_results_csv(Path(csv_path).read_text())
