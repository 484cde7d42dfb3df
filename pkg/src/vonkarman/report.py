"""CSV tables and a minimal SVG convergence plot."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .analysis import NORMS, CompareResult, ErrorReport, Solution, sample_field


def fmt(x: float) -> str:
    return f"{float(x):.17e}"


def _write(path: Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_errors_csv(path, report: ErrorReport) -> Path:
    rows = [[r.level, fmt(r.h), r.n_free, fmt(r.L2), fmt(r.H1), fmt(r.H2)] for r in report.levels]
    return _write(path, ["level", "h", "n_free", "L2", "H1", "H2"], rows)


def write_rates_csv(path, report: ErrorReport) -> Path:
    k = len(report.levels) - 1
    header = ["norm"] + [f"rate_{i + 1}" for i in range(k)] + ["ls_slope"]
    rows = []
    for nm in NORMS:
        slope = report.slope(nm) if len(report.levels) >= 2 else float("nan")
        rows.append([nm] + [fmt(x) for x in report.rates(nm)] + [fmt(slope)])
    return _write(path, header, rows)


def write_solution_csv(path, solution: Solution, m: int = 3) -> Path:
    x, (u, v) = sample_field(solution.field("u"), m, extra=solution.field("v"))
    rows = [[fmt(a), fmt(b), fmt(c), fmt(d)] for (a, b), c, d in zip(x, u, v)]
    return _write(path, ["x", "y", "u", "v"], rows)


def write_compare_csv(path, result: CompareResult) -> Path:
    rows = [
        ["max_u_mixed", fmt(result.max_u_mixed)],
        ["max_u_c1", fmt(result.max_u_c1)],
        ["ratio", fmt(result.ratio)],
        ["level_mixed", result.levels_mixed],
        ["level_c1", result.levels_c1],
        ["history_mixed", " ".join(fmt(x) for x in result.history_mixed)],
        ["history_c1", " ".join(fmt(x) for x in result.history_c1)],
    ]
    return _write(path, ["quantity", "value"], rows)


_COLORS = {"L2": "#1f77b4", "H1": "#d62728", "H2": "#2ca02c"}


def convergence_svg(report: ErrorReport, width: int = 520, height: int = 400) -> str:
    """Log-log error against h, one polyline per norm, slope labels at the fine end."""
    h = report.column("h")
    series = {nm: report.column(nm) for nm in NORMS}
    pos = np.concatenate([e[e > 0] for e in series.values()])
    lx0, lx1 = math.log10(h.min()), math.log10(h.max())
    ly0, ly1 = math.floor(math.log10(pos.min())), math.ceil(math.log10(pos.max()))
    if lx1 == lx0:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    m = 60

    def X(v):
        return m + (math.log10(v) - lx0) / (lx1 - lx0) * (width - 2 * m)

    def Y(v):
        return height - m - (math.log10(v) - ly0) / (ly1 - ly0) * (height - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 20}" text-anchor="middle">h (max macro edge)</text>',
           f'<text x="18" y="{height / 2}" transform="rotate(-90 18 {height / 2})" '
           f'text-anchor="middle">error</text>']
    for k in range(ly0, ly1 + 1):
        y = Y(10.0**k)
        out.append(f'<line x1="{m - 4}" y1="{y:.1f}" x2="{m}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{m - 6}" y="{y + 4:.1f}" text-anchor="end">1e{k}</text>')
    for nm, e in series.items():
        ok = e > 0
        pts = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(h[ok], e[ok]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[nm]}" stroke-width="2"/>')
        if ok.sum() >= 2:
            slope = report.slope(nm, last=min(3, int(ok.sum())))
            out.append(f'<text x="{X(h[ok][-1]) + 4:.1f}" y="{Y(e[ok][-1]):.1f}" fill="{_COLORS[nm]}">'
                       f'{nm} slope {slope:.2f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
