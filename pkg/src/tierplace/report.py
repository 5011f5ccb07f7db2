"""Density summaries of a trace: CSV/JSON tables and a log-log SVG scatter."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Sequence

from .econ import CostModel, crossover_density
from .trace_model import BYTES_PER_TB, Trace, avg_iops, shuffle_aggregates
from .workload_gen import config_histogram, density_scatter, fraction_above

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 20, 50


def shuffle_rows(trace: Trace, crossover: float) -> list[dict]:
    rows = []
    for (run_id, stage_id), group in shuffle_aggregates(trace).items():
        size_tb = math.fsum(f.size_bytes for f in group) / BYTES_PER_TB
        iops = math.fsum(avg_iops(f) for f in group)
        density = iops / size_tb
        rows.append({"run_id": run_id, "stage_id": stage_id, "size_tb": size_tb,
                     "avg_iops": iops, "iops_per_tb": density,
                     "above_crossover": density > crossover})
    return rows


def summary(trace: Trace, model: CostModel) -> dict:
    c = crossover_density(model)
    points = density_scatter(trace)
    hist = config_histogram(trace)
    return {
        "cost_model": model.to_dict(),
        "crossover_iops_per_tb": c,
        "n_runs": len(trace.runs),
        "n_files": len(trace.files),
        "n_shuffles": len(points),
        "fraction_above_crossover": fraction_above(points, c),
        "max_configs_per_pipeline": max(hist.values(), default=0),
    }


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def summary_to_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in d.items():
        w.writerow([k, json.dumps(v) if isinstance(v, dict) else v])
    return buf.getvalue()


def _decades(lo: float, hi: float) -> tuple[int, int]:
    a = math.floor(math.log10(lo))
    b = math.ceil(math.log10(hi))
    return a, max(b, a + 1)


def scatter_svg(points: Sequence[tuple[float, float]], crossover: float) -> str:
    """Log-log scatter of (size TB, avg IOPS) with the break-even line IOPS = crossover * TB."""
    sizes = [p[0] for p in points if p[0] > 0] or [1.0]
    iops = [p[1] for p in points if p[1] > 0] or [crossover]
    x0, x1 = _decades(min(sizes), max(sizes))
    # the y range also spans the crossover line over the x range
    y0, y1 = _decades(min(min(iops), crossover * 10.0**x0), max(max(iops), crossover * 10.0**x1))

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        lx = math.log10(x) if x > 0 else x0
        return MARGIN_L + (lx - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        ly = math.log10(y) if y > 0 else y0
        return MARGIN_T + plot_h - (ly - y0) / (y1 - y0) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line class="axis" x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" '
        f'x2="{MARGIN_L + plot_w}" y2="{MARGIN_T + plot_h}" stroke="black"/>',
        f'<line class="axis" x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{MARGIN_T + plot_h}" stroke="black"/>',
    ]
    for d in range(x0, x1 + 1):
        x = px(10.0**d)
        out.append(f'<line class="tick" x1="{x:.2f}" y1="{MARGIN_T + plot_h}" x2="{x:.2f}" '
                   f'y2="{MARGIN_T + plot_h + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN_T + plot_h + 18}" font-size="11" '
                   f'text-anchor="middle">1e{d}</text>')
    for d in range(y0, y1 + 1):
        y = py(10.0**d)
        out.append(f'<line class="tick" x1="{MARGIN_L - 5}" y1="{y:.2f}" x2="{MARGIN_L}" '
                   f'y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" font-size="11" '
                   f'text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{MARGIN_L + plot_w / 2:.2f}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">shuffle size (TB)</text>')
    out.append(f'<text x="15" y="{MARGIN_T + plot_h / 2:.2f}" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 15 {MARGIN_T + plot_h / 2:.2f})">'
               f'average IOPS</text>')

    for size, rate in points:
        cls = "point above" if size > 0 and rate / size > crossover else "point below"
        out.append(f'<circle class="{cls}" cx="{px(size):.2f}" cy="{py(rate):.2f}" r="2.5" '
                   f'fill="{"#1f77b4" if "above" in cls else "#7f7f7f"}" fill-opacity="0.7"/>')

    lx0, lx1 = 10.0**x0, 10.0**x1
    out.append(f'<line class="crossover" x1="{px(lx0):.2f}" y1="{py(crossover * lx0):.2f}" '
               f'x2="{px(lx1):.2f}" y2="{py(crossover * lx1):.2f}" stroke="red" '
               f'stroke-width="1.5"/>')
    out.append(f'<text x="{MARGIN_L + plot_w - 4}" y="{MARGIN_T + 14}" font-size="11" '
               f'text-anchor="end" fill="red">{crossover:g} IOPS/TB</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
