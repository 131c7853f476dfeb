"""Metric export (CSV/JSON) and static SVG trajectory renders."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

METRIC_COLUMNS = ["instance_id", "method", "uavs", "interval", "seed", "time_s", "return", "collisions"]
_INT_COLUMNS = {"instance_id", "uavs", "interval", "seed", "collisions"}
_FLOAT_COLUMNS = {"time_s", "return"}

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"]


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(row[k]) if k in _FLOAT_COLUMNS else row[k] for k in METRIC_COLUMNS})
    return buf.getvalue()


def metrics_to_json(rows) -> str:
    return json.dumps([{k: row[k] for k in METRIC_COLUMNS} for row in rows], indent=1)


def parse_metrics_csv(text: str) -> list[dict]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k in METRIC_COLUMNS:
            v = rec[k]
            row[k] = int(v) if k in _INT_COLUMNS else float(v) if k in _FLOAT_COLUMNS else v
        out.append(row)
    return out


def export_artifacts(rows, path, fmt: str = "csv") -> Path:
    """Write metric rows in their given order to ``path`` as csv or json."""
    path = Path(path)
    if fmt == "csv":
        text = metrics_to_csv(rows)
    elif fmt == "json":
        text = metrics_to_json(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _project(p, projection: str):
    x, y, z = p
    if projection == "top":
        return x, y
    c, s = math.cos(math.radians(30)), math.sin(math.radians(30))
    return (x - y) * c, (x + y) * s - z


def render_trajectory_svg(log, projection: str = "top", size: int = 480) -> str:
    """Render a :class:`~swarmfield.harness.TrajectoryLog` as an SVG document."""
    if projection not in ("top", "iso"):
        raise ValueError("projection must be 'top' or 'iso'")
    if not log.positions:
        raise ValueError("empty trajectory log")
    n_uavs = len(log.positions[0])
    pts = [_project(p, projection) for frame in log.positions for p in frame]
    pts += [_project(p, projection) for p in log.starts + log.ends]
    for snap in log.hazards:
        for h in snap["hazards"]:
            cx, cy = _project(h[:3], projection)
            pts += [(cx - h[3], cy - h[3]), (cx + h[3], cy + h[3])]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, y0 = min(xs), min(ys)
    span = max(max(xs) - x0, max(ys) - y0, 1e-9)
    pad = 20
    scale = (size - 2 * pad) / span

    def tx(p):
        u, v = _project(p, projection)
        return (pad + (u - x0) * scale, size - pad - (v - y0) * scale)

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}" data-projection="{projection}">',
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    for epoch, snap in enumerate(log.hazards):
        out.append(f'<g class="hazards" data-epoch="{epoch}" data-t="{snap["t"]}">')
        for h in snap["hazards"]:
            cx, cy = tx(h[:3])
            out.append(f'<circle class="hazard" cx="{cx:.2f}" cy="{cy:.2f}" r="{h[3] * scale:.2f}" '
                       f'fill="red" fill-opacity="0.15" stroke="red"/>')
        out.append("</g>")
    for i in range(n_uavs):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (tx(frame[i]) for frame in log.positions))
        out.append(f'<polyline class="uav" data-uav="{i}" points="{coords}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        sx, sy = tx(log.starts[i])
        out.append(f'<rect class="start" data-uav="{i}" x="{sx - 3:.2f}" y="{sy - 3:.2f}" '
                   f'width="6" height="6" fill="{color}"/>')
        ex, ey = tx(log.ends[i])
        out.append(f'<circle class="target" data-uav="{i}" cx="{ex:.2f}" cy="{ey:.2f}" r="5" '
                   f'fill="none" stroke="blue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
