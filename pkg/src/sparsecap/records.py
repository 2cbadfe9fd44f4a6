"""Experiment rows, CSV/JSON serialization, summaries, and SVG line charts.

CSV is the source of truth: one row per (method, keep, seed, epoch, metric).
Bodies are byte-identical across reruns with the same master seed; the only
varying line is the optional timestamp comment in the header.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("method", "keep", "seed", "epoch", "metric", "value")


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    keep: float
    seed: int
    epoch: int
    metric: str
    value: float

    def row(self):
        return (
            self.method,
            repr(float(self.keep)),
            str(int(self.seed)),
            str(int(self.epoch)),
            self.metric,
            repr(float(self.value)),
        )


def sort_records(records):
    """Deterministic merge order, independent of worker scheduling."""
    return sorted(records, key=lambda r: (r.method, r.keep, r.seed, r.epoch, r.metric))


def write_records_csv(records, path, timestamp: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# sparsecap-records schema={CSV_SCHEMA_VERSION}\n")
        if timestamp:
            fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_records_csv(path):
    records = []
    with open(path, newline="") as fh:
        body = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(io.StringIO("".join(body)))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {header}")
    for row in reader:
        records.append(
            ExperimentRecord(
                method=row[0],
                keep=float(row[1]),
                seed=int(row[2]),
                epoch=int(row[3]),
                metric=row[4],
                value=float(row[5]),
            )
        )
    return records


def csv_body(path) -> bytes:
    """File content minus comment lines, for byte-identity checks."""
    with open(path, "rb") as fh:
        return b"".join(line for line in fh if not line.startswith(b"#"))


def mean_stderr(values):
    """(mean, population-std/sqrt(k), k); stderr None when k == 1."""
    vals = [float(v) for v in values]
    k = len(vals)
    if k == 0:
        raise ValueError("no values")
    mean = sum(vals) / k
    if k == 1:
        return mean, None, 1
    var = sum((v - mean) ** 2 for v in vals) / k
    return mean, math.sqrt(var) / math.sqrt(k), k


def summarize(records):
    """{metric: {method: {keep: {mean, stderr, k}}}}, aggregated over seeds
    (each (seed, epoch) contributes one value)."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.metric, rec.method, rec.keep), []).append(rec.value)
    out = {}
    for (metric, method, keep), vals in sorted(groups.items()):
        mean, stderr, k = mean_stderr(vals)
        out.setdefault(metric, {}).setdefault(method, {})[repr(float(keep))] = {
            "mean": mean,
            "stderr": stderr,
            "k": k,
        }
    return out


def write_summary_json(summary, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---- SVG line charts -------------------------------------------------------

_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)


def _ticks(lo: float, hi: float, n: int = 5):
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def write_svg_lines(path, series, title="", xlabel="", ylabel="") -> None:
    """Static line chart. series = [(label, xs, ys, yerr-or-None), ...]."""
    width, height = 720, 480
    ml, mr, mt, mb = 70, 160, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_all = []
    for _, _, ys, yerr in series:
        ys_all.extend(ys)
        if yerr is not None:
            ys_all.extend(y + e for y, e in zip(ys, yerr))
            ys_all.extend(y - e for y, e in zip(ys, yerr))
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{ylabel}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="black"/>'
        )
        out.append(
            f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>'
        )
    for i, (label, xs, ys, yerr) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if yerr is not None:
            for x, y, e in zip(xs, ys, yerr):
                if e:
                    out.append(
                        f'<line x1="{sx(x):.2f}" y1="{sy(y - e):.2f}" '
                        f'x2="{sx(x):.2f}" y2="{sy(y + e):.2f}" stroke="{color}"/>'
                    )
        ly = mt + 16 + 18 * i
        out.append(
            f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 34}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{ml + pw + 40}" y="{ly}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


__all__ = [
    "ExperimentRecord",
    "CSV_SCHEMA_VERSION",
    "CSV_COLUMNS",
    "sort_records",
    "write_records_csv",
    "read_records_csv",
    "csv_body",
    "mean_stderr",
    "summarize",
    "write_summary_json",
    "write_svg_lines",
]
