"""CSV and SVG serialisation of metric reports, and merging evaluations into one table."""

import csv
import io
from pathlib import Path

import numpy as np

from .metrics import METRICS

REPORT_FILE = "report.csv"
PCK_FILE = "pck_curves.csv"
PCK_SVG = "pck.svg"


class ReportError(ValueError):
    pass


def _fmt(x):
    return repr(float(x))


def grid_text(grid):
    return ",".join(_fmt(g) for g in grid)


def write_report_csv(path, reports, meta):
    """``reports`` is a list of MetricReport (typically one "at", one "until")."""
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "horizon_ms", "frame", "mode", "value"])
    for rep in reports:
        for metric in METRICS:
            for ms, frame, value in zip(rep.horizons_ms, rep.frames, rep.values[metric]):
                w.writerow([metric, ms, frame, rep.mode, _fmt(value)])
    Path(path).write_text(buf.getvalue())


def read_report_csv(path):
    """Returns ``(meta, rows)``; rows are dicts with typed values."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif line.strip():
            body.append(line)
    rows = []
    for r in csv.DictReader(body):
        rows.append(
            {
                "metric": r["metric"],
                "horizon_ms": int(float(r["horizon_ms"])),
                "frame": int(r["frame"]),
                "mode": r["mode"],
                "value": float(r["value"]),
            }
        )
    return meta, rows


def write_pck_csv(path, reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["horizon_ms", "mode", "rho", "pck"])
    for rep in reports:
        for ms in rep.horizons_ms:
            for rho, v in zip(rep.grid, rep.pck_curves[ms]):
                w.writerow([ms, rep.mode, _fmt(rho), _fmt(v)])
    Path(path).write_text(buf.getvalue())


_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def svg_line_plot(series, title="", xlabel="", ylabel="", width=480, height=320, y_range=(0.0, 1.0)):
    """Minimal SVG: axes, one polyline per ``(label, xs, ys)`` series, and a legend."""
    left, right, top, bottom = 56, 16, 28, 44
    pw, ph = width - left - right, height - top - bottom
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    y0, y1 = y_range

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13" font-family="sans-serif">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(
            f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{xv:.2f}</text>'
        )
        out.append(
            f'<text x="{left - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10" '
            f'font-family="sans-serif">{yv:.2f}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif">{xlabel}</text>'
    )
    out.append(
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">{ylabel}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 14 * i
        out.append(f'<line x1="{left + pw - 90}" y1="{ly}" x2="{left + pw - 70}" y2="{ly}" stroke="{color}"/>')
        out.append(
            f'<text x="{left + pw - 66}" y="{ly + 4}" font-size="10" font-family="sans-serif">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_pck_svg(path, report, title=""):
    series = [(f"{ms} ms", report.grid, report.pck_curves[ms]) for ms in report.horizons_ms]
    Path(path).write_text(svg_line_plot(series, title=title, xlabel="threshold (unit bones)", ylabel="PCK"))


def merge_reports(eval_dirs, mode="until"):
    """Rows = evaluated models, columns = metric x horizon, as one comparison table.

    Refuses to merge evaluations computed on different skeletons or PCK grids.
    """
    if not eval_dirs:
        raise ReportError("no evaluation directories given")
    header, rows, ref = None, [], None
    for d in eval_dirs:
        path = Path(d) / REPORT_FILE
        if not path.is_file():
            raise FileNotFoundError(f"{path} does not exist")
        meta, entries = read_report_csv(path)
        key = (meta.get("skeleton_hash"), meta.get("pck_grid"))
        if ref is None:
            ref = key
        elif key[0] != ref[0]:
            raise ReportError(f"{d}: skeleton hash {key[0]} differs from {ref[0]}")
        elif key[1] != ref[1]:
            raise ReportError(f"{d}: PCK grid differs from the first evaluation")
        picked = [e for e in entries if e["mode"] == mode]
        horizons = sorted({e["horizon_ms"] for e in picked})
        cols = [f"{m}@{h}ms" for m in METRICS for h in horizons]
        if header is None:
            header = cols
        elif cols != header:
            raise ReportError(f"{d}: horizons differ from the first evaluation")
        lookup = {(e["metric"], e["horizon_ms"]): e["value"] for e in picked}
        rows.append([meta.get("model", Path(d).name)] + [lookup[(m, h)] for m in METRICS for h in horizons])
    return ["model"] + header, rows


def write_table_csv(path, header, rows, mode="until"):
    buf = io.StringIO()
    buf.write(f"# mode={mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[0]] + [_fmt(v) for v in r[1:]])
    Path(path).write_text(buf.getvalue())
