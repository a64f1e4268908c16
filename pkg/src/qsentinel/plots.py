"""
Plot-ready exports: percentile bands, ACF stems and Q_p curves.

CSV layouts::

    bands.csv  index,timestamp,p25,p50,p75,qber
    acf.csv    lag,r,band
    qp.csv     p,q_p          (undefined entries written as ``undef``)

SVG output is a hand-built 800x480 line chart. Coordinates are printed with
two decimals and element order is fixed, so output bytes depend only on the
input data.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from ._format import fmt, fmt_timestamp
from .errors import UsageError
from .rankstat import QpCurve
from .stats import AcfResult, PercentileBand
from .telemetry import TelemetrySeries

WIDTH, HEIGHT = 800, 480
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def bands_csv(series: TelemetrySeries, band: PercentileBand) -> str:
    if len(band) != len(series):
        raise UsageError("band and series lengths differ")
    cols = ["index", "timestamp"] + [f"p{fmt(lv)}" for lv in band.levels] + ["qber"]
    lines = [",".join(cols)]
    for i, rec in enumerate(series.records):
        row = [str(i), fmt_timestamp(rec.timestamp)]
        row += [fmt(band.bands[k, i]) for k in range(len(band.levels))]
        row.append(fmt(rec.qber))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def acf_csv(res: AcfResult) -> str:
    band = fmt(res.white_noise_band)
    lines = ["lag,r,band"]
    lines += [f"{k},{fmt(r)},{band}" for k, r in enumerate(res.coefficients)]
    return "\n".join(lines) + "\n"


def qp_csv(curve: QpCurve) -> str:
    lines = ["p,q_p"]
    lines += [f"{fmt(p)},{fmt(q)}" for p, q in zip(curve.p_grid, curve.q_values)]
    return "\n".join(lines) + "\n"


# --- SVG -----------------------------------------------------------------------

class _Axes:
    def __init__(self, xlim: tuple[float, float], ylim: tuple[float, float]):
        self.x0, self.x1 = _pad(xlim)
        self.y0, self.y1 = _pad(ylim)
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y: float) -> float:
        return self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)


def _pad(lim: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(lim[0]), float(lim[1])
    if hi == lo:
        d = abs(lo) * 0.05 or 1.0
        return lo - d, hi + d
    return lo, hi


def _c(v: float) -> str:
    return f"{v:.2f}"


def _points(ax: _Axes, xs: Sequence[float], ys: Sequence[float]) -> str:
    return " ".join(f"{_c(ax.px(x))},{_c(ax.py(y))}" for x, y in zip(xs, ys))


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{title}</text>',
        f'<rect x="{ax.left}" y="{ax.top}" width="{ax.right - ax.left}" '
        f'height="{ax.bottom - ax.top}" fill="none" stroke="black"/>',
    ]
    for k in range(5):
        fx = ax.x0 + (ax.x1 - ax.x0) * k / 4
        fy = ax.y0 + (ax.y1 - ax.y0) * k / 4
        out.append(
            f'<text x="{_c(ax.px(fx))}" y="{ax.bottom + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{fmt(float(f"{fx:.4g}"))}</text>'
        )
        out.append(
            f'<text x="{ax.left - 6}" y="{_c(ax.py(fy) + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{fmt(float(f"{fy:.4g}"))}</text>'
        )
    out.append(
        f'<text x="{(ax.left + ax.right) // 2}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{(ax.top + ax.bottom) // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 16 {(ax.top + ax.bottom) // 2})">{ylabel}</text>'
    )
    return out


def _legend(ax: _Axes, labels: Sequence[str]) -> list[str]:
    out = []
    for k, label in enumerate(labels):
        y = ax.top + 16 + 16 * k
        color = COLORS[k % len(COLORS)]
        out.append(
            f'<line x1="{ax.right - 110}" y1="{y}" x2="{ax.right - 90}" y2="{y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{ax.right - 84}" y="{y + 4}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    return out


def bands_svg(series: TelemetrySeries, band: PercentileBand) -> str:
    idx = np.arange(len(series), dtype=float)
    q = series.qber * 100
    b = band.bands * 100
    ax = _Axes((0.0, max(len(series) - 1, 1)), (min(q.min(), b.min()), max(q.max(), b.max())))
    out = _frame(ax, f"Percentile level filters, {band.window}-point window", "index", "QBER (%)")
    out.append(
        f'<polyline fill="none" stroke="#bbbbbb" stroke-width="1" points="{_points(ax, idx, q)}"/>'
    )
    labels = []
    for k, lv in enumerate(band.levels):
        color = COLORS[k % len(COLORS)]
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'points="{_points(ax, idx, b[k])}"/>'
        )
        labels.append(f"p{fmt(lv)}")
    out += _legend(ax, labels)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def acf_svg(res: AcfResult) -> str:
    r = res.coefficients
    band = res.white_noise_band
    ax = _Axes((-0.5, res.max_lag + 0.5), (min(float(r.min()), -band, 0.0), 1.0))
    out = _frame(ax, "Autocorrelation of QBER deviations", "lag", "r")
    for y in (band, -band):
        out.append(
            f'<line x1="{ax.left}" y1="{_c(ax.py(y))}" x2="{ax.right}" y2="{_c(ax.py(y))}" '
            f'stroke="#d62728" stroke-dasharray="6,4"/>'
        )
    out.append(
        f'<line x1="{ax.left}" y1="{_c(ax.py(0))}" x2="{ax.right}" y2="{_c(ax.py(0))}" stroke="#888888"/>'
    )
    for k, rk in enumerate(r):
        x = _c(ax.px(k))
        out.append(
            f'<line x1="{x}" y1="{_c(ax.py(0))}" x2="{x}" y2="{_c(ax.py(rk))}" '
            f'stroke="{COLORS[0]}" stroke-width="2"/>'
        )
        out.append(f'<circle cx="{x}" cy="{_c(ax.py(rk))}" r="3" fill="{COLORS[0]}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def qp_svg(curve: QpCurve) -> str:
    defined = curve.defined()
    qs = [q for _, q in defined] or [0.0]
    ax = _Axes((float(curve.p_grid[0]), float(curve.p_grid[-1])), (min(qs), max(max(qs), 0.0)))
    out = _frame(ax, "Randomness quality factor Q_p", "p", "Q_p")
    # undefined thresholds split the curve into separate segments
    segment: list[tuple[float, float]] = []
    segments = []
    for p, q in zip(curve.p_grid, curve.q_values):
        if q is None:
            if segment:
                segments.append(segment)
            segment = []
        else:
            segment.append((float(p), q))
    if segment:
        segments.append(segment)
    for seg in segments:
        xs, ys = zip(*seg)
        out.append(
            f'<polyline fill="none" stroke="{COLORS[0]}" stroke-width="2" '
            f'points="{_points(ax, xs, ys)}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_plot(
    target: str | os.PathLike,
    fmt_: Literal["csv", "svg"] = "csv",
    *,
    series: Optional[TelemetrySeries] = None,
    band: Optional[PercentileBand] = None,
    acf_result: Optional[AcfResult] = None,
    curve: Optional[QpCurve] = None,
) -> list[Path]:
    """Write one file per supplied figure layer into directory ``target``."""
    if fmt_ not in ("csv", "svg"):
        raise UsageError(f"format must be csv or svg, got {fmt_!r}")
    out_dir = Path(target)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs: list[tuple[str, str]] = []
    if band is not None:
        if series is None:
            raise UsageError("band export needs the source series")
        jobs.append(("bands", bands_csv(series, band) if fmt_ == "csv" else bands_svg(series, band)))
    if acf_result is not None:
        jobs.append(("acf", acf_csv(acf_result) if fmt_ == "csv" else acf_svg(acf_result)))
    if curve is not None:
        jobs.append(("qp", qp_csv(curve) if fmt_ == "csv" else qp_svg(curve)))
    written = []
    for name, body in jobs:
        path = out_dir / f"{name}.{fmt_}"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        written.append(path)
    return written
