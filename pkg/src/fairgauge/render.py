"""Static SVG figures drawn from a serialized report.

Box plots use a linear vertical scale over a fixed value domain: [-1, 1]
for gaps and [0, 1] for accuracy and F1. A value ``v`` maps to::

    y = PLOT_TOP + (hi - v) / (hi - lo) * PLOT_HEIGHT

so ``hi`` sits at the top of the plot area and ``lo`` at the bottom. The
whiskers reach the minimum and maximum, the box spans q1..q3 and a line
marks the median.
"""

from __future__ import annotations

import re
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH = 240
HEIGHT = 320
PLOT_TOP = 40
PLOT_HEIGHT = 240
BOX_X = 90
BOX_WIDTH = 60
GAP_DOMAIN = (-1.0, 1.0)
UNIT_DOMAIN = (0.0, 1.0)

CELL_W = 90
CELL_H = 24
LABEL_W = 140


def y_coord(value: float, domain=GAP_DOMAIN) -> float:
    lo, hi = domain
    return PLOT_TOP + (hi - value) / (hi - lo) * PLOT_HEIGHT


def _num(x: float) -> str:
    return format(round(x, 4), ".4f").rstrip("0").rstrip(".")


def boxplot_svg(summary: dict, title: str, domain=GAP_DOMAIN) -> str:
    lo, hi = domain
    cx = BOX_X + BOX_WIDTH / 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<text x="{WIDTH / 2:g}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{escape(title)}</text>',
        f'<line class="axis" x1="50" y1="{PLOT_TOP}" x2="50" y2="{PLOT_TOP + PLOT_HEIGHT}" stroke="#000"/>',
    ]
    for tick in (lo, (lo + hi) / 2, hi):
        ty = _num(y_coord(tick, domain))
        parts.append(f'<line x1="45" y1="{ty}" x2="50" y2="{ty}" stroke="#000"/>')
        parts.append(f'<text x="42" y="{ty}" text-anchor="end" dominant-baseline="middle" '
                     f'font-family="sans-serif" font-size="10">{_num(tick)}</text>')
    if summary.get("count", 0) == 0:
        parts.append(f'<text class="empty" x="{cx:g}" y="{PLOT_TOP + PLOT_HEIGHT / 2:g}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="11">'
                     f'no defined values ({summary.get("undefined_count", 0)} undefined)</text>')
    else:
        y_min, y_q1, y_med, y_q3, y_max = (y_coord(summary[k], domain)
                                           for k in ("min", "q1", "median", "q3", "max"))
        parts += [
            f'<line class="whisker" x1="{cx:g}" y1="{_num(y_max)}" x2="{cx:g}" y2="{_num(y_q3)}" stroke="#333"/>',
            f'<line class="whisker" x1="{cx:g}" y1="{_num(y_q1)}" x2="{cx:g}" y2="{_num(y_min)}" stroke="#333"/>',
            f'<line class="cap-max" x1="{BOX_X + 15}" y1="{_num(y_max)}" x2="{BOX_X + BOX_WIDTH - 15}" '
            f'y2="{_num(y_max)}" stroke="#333"/>',
            f'<line class="cap-min" x1="{BOX_X + 15}" y1="{_num(y_min)}" x2="{BOX_X + BOX_WIDTH - 15}" '
            f'y2="{_num(y_min)}" stroke="#333"/>',
            f'<rect class="box" x="{BOX_X}" y="{_num(y_q3)}" width="{BOX_WIDTH}" '
            f'height="{_num(y_q1 - y_q3)}" fill="#9ecae1" stroke="#333"/>',
            f'<line class="median" x1="{BOX_X}" y1="{_num(y_med)}" x2="{BOX_X + BOX_WIDTH}" '
            f'y2="{_num(y_med)}" stroke="#000" stroke-width="2"/>',
        ]
        if summary.get("undefined_count"):
            parts.append(f'<text x="{cx:g}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" '
                         f'font-size="10">{summary["undefined_count"]} undefined</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _color(value: float | None, lo: float, hi: float, diverging: bool) -> str:
    if value is None:
        return "#dddddd"
    if diverging:
        # blue for negative, red for positive
        t = max(-1.0, min(1.0, value / (max(abs(lo), abs(hi)) or 1.0)))
        if t >= 0:
            r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
        else:
            r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    else:
        t = 0.0 if hi <= lo else (value - lo) / (hi - lo)
        r, g, b = round(255 - 200 * t), round(255 - 120 * t), round(255 - 200 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def heat_table_svg(rows: list[str], cols: list[str], values: list[list], title: str,
                   diverging: bool) -> str:
    defined = [v for row in values for v in row if v is not None]
    lo, hi = (min(defined), max(defined)) if defined else (0.0, 1.0)
    width = LABEL_W + CELL_W * len(cols) + 10
    height = 50 + CELL_H * (len(rows) + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="10" y="20" font-family="sans-serif" font-size="12">{escape(title)}</text>',
    ]
    for j, col in enumerate(cols):
        parts.append(f'<text x="{LABEL_W + CELL_W * j + CELL_W / 2:g}" y="{50 - 6}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{escape(col)}</text>')
    for i, row in enumerate(rows):
        y = 50 + CELL_H * i
        parts.append(f'<text x="{LABEL_W - 6}" y="{y + CELL_H / 2:g}" text-anchor="end" '
                     f'dominant-baseline="middle" font-family="sans-serif" font-size="10">{escape(row)}</text>')
        for j, v in enumerate(values[i]):
            x = LABEL_W + CELL_W * j
            label = "n/a" if v is None else format(v, ".3g")
            parts.append(f'<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" '
                         f'fill="{_color(v, lo, hi, diverging)}" stroke="#fff"/>')
            parts.append(f'<text x="{x + CELL_W / 2:g}" y="{y + CELL_H / 2:g}" text-anchor="middle" '
                         f'dominant-baseline="middle" font-family="sans-serif" font-size="10">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _slug(*parts) -> str:
    return "_".join(re.sub(r"[^A-Za-z0-9.-]+", "-", str(p)).strip("-") or "x" for p in parts)


class ReportFormatError(ValueError):
    pass


def render_report(report: dict, out_dir) -> list[Path]:
    """Write box plots and heat tables for ``report`` (the dict form of a SummaryReport).

    Gap box plots are named ``box-*.svg``, accuracy/F1 box plots
    ``perf-*.svg`` and variance/mean grids ``heat-*.svg``.
    """
    try:
        gap_rows = report["gap_summaries"]
        perf_rows = report.get("accuracy_summaries", []) + report.get("f1_summaries", [])
        sizes = report["sizes"]
        variants = report["variants"]
        retained = report["retained_classes"]
    except (KeyError, TypeError) as exc:
        raise ReportFormatError(f"malformed report: missing {exc}") from None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, text):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    try:
        for r in gap_rows:
            title = f"{r['metric']} gap, {r['class']}, n={r['size']} ({r['variant']})"
            emit(f"box-{_slug(r['variant'], r['metric'], r['class'], r['size'])}.svg",
                 boxplot_svg(r["summary"], title, GAP_DOMAIN))
        for r in perf_rows:
            label = r["quantity"] if not r.get("class") else f"{r['quantity']} {r['class']}"
            emit(f"perf-{_slug(r['variant'], r['quantity'], r.get('class') or 'all', r['size'])}.svg",
                 boxplot_svg(r["summary"], f"{label}, n={r['size']} ({r['variant']})", UNIT_DOMAIN))
        lookup = {(r["variant"], r["metric"], r["class"], r["size"]): r["summary"] for r in gap_rows}
        metrics = list(dict.fromkeys(r["metric"] for r in gap_rows))
        for variant in variants:
            for metric in metrics:
                for stat, diverging in (("variance", False), ("mean", True)):
                    grid = [[lookup.get((variant, metric, c, s), {}).get(stat) for s in sizes]
                            for c in retained]
                    emit(f"heat-{_slug(variant, metric, stat)}.svg",
                         heat_table_svg(retained, [str(s) for s in sizes], grid,
                                        f"{stat} of {metric} gap ({variant})", diverging))
    except (KeyError, TypeError) as exc:
        raise ReportFormatError(f"malformed report entry: {exc}") from None
    return written
