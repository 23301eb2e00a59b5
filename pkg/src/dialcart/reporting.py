"""Machine-readable result tables and self-contained SVG plots.

CSV is the primary artifact; every table carries the hash of the config
that produced it on a leading ``# config_hash=...`` line.  Plots are
SVG 1.1 strings built without any renderer dependency, byte-identical
for identical inputs.  A manifest file lists all emitted artifacts with
their sha256 digests.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

from .cartography import BUCKETS, DataMapPoint
from .experiment import LearningCurve

BUCKET_COLORS = {
    "Easy": "#4c72b0",
    "Medium": "#55a868",
    "Hard": "#dd8452",
    "Impossible": "#c44e52",
}
SERIES_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


class ReportingError(ValueError):
    pass


def config_hash(config: dict) -> str:
    """Stable digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def render_table(header: list[str], rows: list[list], cfg_hash: str | None = None) -> str:
    buf = io.StringIO()
    if cfg_hash is not None:
        buf.write(f"# config_hash={cfg_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_table(
    path: str | Path, header: list[str], rows: list[list], cfg_hash: str | None = None
) -> None:
    Path(path).write_text(render_table(header, rows, cfg_hash), encoding="utf-8")


def read_table(path: str | Path) -> tuple[list[str], list[list[str]], str | None]:
    text = Path(path).read_text(encoding="utf-8")
    cfg_hash = None
    if text.startswith("# config_hash="):
        first, _, text = text.partition("\n")
        cfg_hash = first[len("# config_hash=") :]
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:], cfg_hash


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


# ------------------------------------------------------------------ tables

def data_map_table(
    points: list[DataMapPoint], tags: dict[str, str], roles: dict[str, str]
) -> tuple[list[str], list[list]]:
    header = ["id", "tag", "role", "confidence", "variability", "correctness", "bucket"]
    rows = [
        [
            p.instance_id,
            tags.get(p.instance_id, ""),
            roles.get(p.instance_id, ""),
            _fmt(p.confidence),
            _fmt(p.variability),
            _fmt(p.correctness),
            p.bucket,
        ]
        for p in points
    ]
    return header, rows


def learning_curve_table(
    curves: list[LearningCurve], metric: str
) -> tuple[list[str], list[list]]:
    if metric not in ("accuracy", "macro_f1"):
        raise ReportingError(f"unknown metric {metric!r}")
    header = ["strategy", "labeled_count", "mean", "std"]
    rows = []
    for curve in curves:
        means = curve.accuracy_mean if metric == "accuracy" else curve.macro_f1_mean
        stds = curve.accuracy_std if metric == "accuracy" else curve.macro_f1_std
        for n, m, s in zip(curve.labeled_counts, means, stds):
            rows.append([curve.strategy, n, _fmt(m), _fmt(s)])
    return header, rows


def sampling_frequency_table(
    rounds: list[int], counts: dict[str, list[int]]
) -> tuple[list[str], list[list]]:
    for tag, row in counts.items():
        if any(b < a for a, b in zip(row, row[1:])):
            raise ReportingError(f"cumulative counts for {tag!r} are not monotone")
    tags = sorted(counts)
    header = ["round", *tags]
    rows = [[r, *(counts[t][i] for t in tags)] for i, r in enumerate(rounds)]
    return header, rows


# ------------------------------------------------------------------- plots

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 60, 150, 20, 45


def _svg_open() -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]


def _axes(x_label: str, y_label: str) -> list[str]:
    x0, y0, x1, y1 = _ML, _H - _MB, _W - _MR, _MT
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 8}" text-anchor="middle" '
        f'font-size="13">{x_label}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{y_label}</text>',
    ]


def _scale(v: float, lo: float, hi: float, p0: float, p1: float) -> float:
    if hi == lo:
        return (p0 + p1) / 2
    return p0 + (v - lo) / (hi - lo) * (p1 - p0)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_data_map(points: list[DataMapPoint]) -> str:
    """Scatter: variability on x (0..0.5), confidence on y (0..1), bucket color."""
    if not points:
        raise ReportingError("no points to plot")
    x_hi = max(0.5, max(p.variability for p in points))
    parts = _svg_open() + _axes("variability", "confidence")
    x0, y0, x1, y1 = _ML, _H - _MB, _W - _MR, _MT
    for t in _ticks(0.0, x_hi):
        px = _scale(t, 0.0, x_hi, x0, x1)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 17}" text-anchor="middle" font-size="11">{t:.2f}</text>'
        )
    for t in _ticks(0.0, 1.0):
        py = _scale(t, 0.0, 1.0, y0, y1)
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 7}" y="{py + 4:.1f}" text-anchor="end" font-size="11">{t:.2f}</text>'
        )
    for p in sorted(points, key=lambda p: p.instance_id):
        px = _scale(p.variability, 0.0, x_hi, x0, x1)
        py = _scale(p.confidence, 0.0, 1.0, y0, y1)
        parts.append(
            f'<circle class="bucket-{p.bucket}" cx="{px:.2f}" cy="{py:.2f}" r="3" '
            f'fill="{BUCKET_COLORS[p.bucket]}" fill-opacity="0.7"/>'
        )
    for i, bk in enumerate(BUCKETS):
        ly = _MT + 14 + i * 18
        parts.append(
            f'<rect x="{_W - _MR + 16}" y="{ly - 9}" width="10" height="10" '
            f'fill="{BUCKET_COLORS[bk]}"/>'
        )
        parts.append(
            f'<text x="{_W - _MR + 31}" y="{ly}" font-size="12">{bk}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_learning_curves(curves: list[LearningCurve], metric: str) -> str:
    """One line per strategy with a +/- std band; x is labeled count."""
    if not curves:
        raise ReportingError("no curves to plot")
    grids = [c.labeled_counts for c in curves]
    if any(g != grids[0] for g in grids[1:]):
        raise ReportingError("curves are on different labeled-count grids")
    xs = grids[0]
    x_lo, x_hi = min(xs), max(xs)
    x0, y0, x1, y1 = _ML, _H - _MB, _W - _MR, _MT
    parts = _svg_open() + _axes("labeled examples", metric)
    for t in _ticks(float(x_lo), float(x_hi)):
        px = _scale(t, x_lo, x_hi, x0, x1)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 17}" text-anchor="middle" font-size="11">{t:.0f}</text>'
        )
    for t in _ticks(0.0, 1.0):
        py = _scale(t, 0.0, 1.0, y0, y1)
        parts.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 7}" y="{py + 4:.1f}" text-anchor="end" font-size="11">{t:.2f}</text>'
        )
    for i, curve in enumerate(sorted(curves, key=lambda c: c.strategy)):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        means = curve.accuracy_mean if metric == "accuracy" else curve.macro_f1_mean
        stds = curve.accuracy_std if metric == "accuracy" else curve.macro_f1_std
        pts = [
            (_scale(n, x_lo, x_hi, x0, x1), _scale(m, 0.0, 1.0, y0, y1))
            for n, m in zip(xs, means)
        ]
        upper = [
            (_scale(n, x_lo, x_hi, x0, x1), _scale(min(1.0, m + s), 0.0, 1.0, y0, y1))
            for n, m, s in zip(xs, means, stds)
        ]
        lower = [
            (_scale(n, x_lo, x_hi, x0, x1), _scale(max(0.0, m - s), 0.0, 1.0, y0, y1))
            for n, m, s in zip(xs, means, stds)
        ]
        band = " ".join(f"{px:.2f},{py:.2f}" for px, py in upper + lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.15"/>')
        if len(pts) == 1:
            parts.append(
                f'<circle cx="{pts[0][0]:.2f}" cy="{pts[0][1]:.2f}" r="3" fill="{color}"/>'
            )
        else:
            line = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
            parts.append(
                f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.6"/>'
            )
        ly = _MT + 14 + i * 18
        parts.append(
            f'<rect x="{_W - _MR + 16}" y="{ly - 9}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(f'<text x="{_W - _MR + 31}" y="{ly}" font-size="12">{curve.strategy}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_sampling_frequency(rounds: list[int], counts: dict[str, list[int]]) -> str:
    """Stacked bars: one bar per round, one segment per tag (cumulative counts)."""
    for tag, row in counts.items():
        if any(b < a for a, b in zip(row, row[1:])):
            raise ReportingError(f"cumulative counts for {tag!r} are not monotone")
    parts = _svg_open() + _axes("round", "cumulative acquired labels")
    x0, y0, x1, y1 = _ML, _H - _MB, _W - _MR, _MT
    tags = sorted(counts)
    totals = [sum(counts[t][i] for t in tags) for i in range(len(rounds))]
    top = max(totals) if totals else 0
    if rounds:
        slot = (x1 - x0) / len(rounds)
        width = slot * 0.7
        for i, r in enumerate(rounds):
            base = y0
            cx = x0 + slot * (i + 0.5)
            for j, tag in enumerate(tags):
                value = counts[tag][i]
                if value == 0 or top == 0:
                    continue
                h = value / top * (y0 - y1)
                base -= h
                parts.append(
                    f'<rect class="seg-{j}" x="{cx - width / 2:.2f}" y="{base:.2f}" '
                    f'width="{width:.2f}" height="{h:.2f}" '
                    f'fill="{SERIES_COLORS[j % len(SERIES_COLORS)]}"/>'
                )
            parts.append(
                f'<text x="{cx:.1f}" y="{y0 + 17}" text-anchor="middle" font-size="11">{r}</text>'
            )
    for j, tag in enumerate(tags):
        ly = _MT + 14 + j * 16
        parts.append(
            f'<rect x="{_W - _MR + 16}" y="{ly - 9}" width="10" height="10" '
            f'fill="{SERIES_COLORS[j % len(SERIES_COLORS)]}"/>'
        )
        parts.append(f'<text x="{_W - _MR + 31}" y="{ly}" font-size="11">{tag}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------- manifest

def write_manifest(directory: str | Path) -> Path:
    """List every artifact in ``directory`` (recursively) with its sha256."""
    directory = Path(directory)
    entries = []
    for path in sorted(directory.rglob("*")):
        if path.is_dir() or path.name == "manifest.json":
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        entries.append(
            {"path": str(path.relative_to(directory)), "sha256": digest, "bytes": path.stat().st_size}
        )
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"files": entries}, indent=2) + "\n", encoding="utf-8")
    return manifest
