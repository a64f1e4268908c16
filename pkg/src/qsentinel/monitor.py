"""
Alerting and reporting on link telemetry.

Three detectors run over a telemetry series:

* ``threshold_scan``: runs of QBER at or above the acceptability limit.
* ``excess_correlation_scan``: consecutive short-lag autocorrelations outside
  the white-noise band.
* ``trend_scan``: regression slope of QBER on time, tested against its
  standard error.

``watch_step`` runs them incrementally over a growing series.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Optional, Sequence

import numpy as np

from ._format import fmt
from .errors import DataError, QSentinelError, UsageError
from .rankstat import DEFAULT_GRID_SIZE, compare_randomness
from .stats import (
    DEFAULT_LEVELS,
    acf,
    forecast,
    linear_regression,
    percentile_level_filter,
    summary_stats,
)
from .telemetry import TelemetryRecord, TelemetrySeries, TimeTagSeries

log = logging.getLogger(__name__)

AlertKind = Literal["qber_threshold", "excess_correlation", "trend"]
Severity = Literal["warning", "critical"]

CRITICAL_RUN_LENGTH = 3
TREND_HORIZON_S = 86_400.0
MIN_TREND_POINTS = 10
REFERENCE_CLOCK_HZ = 1e8


@dataclass(frozen=True)
class MonitorConfig:
    qber_limit: float = 0.04
    acf_lag_window: tuple[int, int] = (1, 5)
    acf_min_consecutive: int = 2
    trend_slope_sigma: float = 3.0
    percentile_window: int = 50
    recompute_every: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "acf_lag_window", tuple(int(v) for v in self.acf_lag_window))
        lo, hi = self.acf_lag_window
        if not 0.0 < self.qber_limit < 1.0:
            raise UsageError(f"qber_limit must lie in (0, 1), got {self.qber_limit!r}")
        if not 1 <= lo <= hi:
            raise UsageError(f"acf_lag_window must satisfy 1 <= lo <= hi, got {(lo, hi)}")
        if not 1 <= self.acf_min_consecutive <= hi - lo + 1:
            raise UsageError("acf_min_consecutive must fit inside the lag window")
        if self.trend_slope_sigma <= 0:
            raise UsageError("trend_slope_sigma must be positive")
        if self.percentile_window < 1 or self.recompute_every < 1:
            raise UsageError("percentile_window and recompute_every must be >= 1")


@dataclass(frozen=True)
class AlertEvent:
    kind: AlertKind
    severity: Severity
    start_index: int
    end_index: int  # inclusive
    evidence: dict[str, Any]
    message: str

    @property
    def key(self) -> tuple[str, int]:
        return (self.kind, self.start_index)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --- detectors ---------------------------------------------------------------

def threshold_scan(series: TelemetrySeries, config: MonitorConfig = MonitorConfig()) -> list[AlertEvent]:
    """One alert per maximal run of consecutive records with qber >= limit."""
    q = series.qber
    above = q >= config.qber_limit
    alerts = []
    i, n = 0, q.size
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        length = j - i + 1
        peak = float(q[i : j + 1].max())
        severity: Severity = "critical" if length >= CRITICAL_RUN_LENGTH else "warning"
        alerts.append(
            AlertEvent(
                "qber_threshold",
                severity,
                i,
                j,
                {"max_qber": peak, "run_length": length, "qber_limit": config.qber_limit},
                f"QBER >= {fmt(100 * config.qber_limit)} % for {length} record(s) "
                f"[{i}..{j}], peak {fmt(100 * peak)} %",
            )
        )
        i = j + 1
    return alerts


def _longest_run(lags: Sequence[int]) -> list[int]:
    best: list[int] = []
    cur: list[int] = []
    for lag in lags:
        cur = cur + [lag] if cur and lag == cur[-1] + 1 else [lag]
        if len(cur) > len(best):
            best = cur
    return best


def excess_correlation_scan(
    values: Sequence[float], config: MonitorConfig = MonitorConfig()
) -> Optional[AlertEvent]:
    """
    Alert when at least ``acf_min_consecutive`` consecutive lags inside the
    configured lag window have |r(k)| above the 1.96/sqrt(n) band.
    """
    lo, hi = config.acf_lag_window
    res = acf(values, hi)
    band = res.white_noise_band
    window_lags = list(range(lo, hi + 1))
    significant = [k for k in window_lags if abs(res.coefficients[k]) > band]
    run = _longest_run(significant)
    if len(run) < config.acf_min_consecutive:
        return None
    severity: Severity = "critical" if len(significant) == len(window_lags) else "warning"
    evidence = {
        "n": res.n,
        "band": band,
        "lags": window_lags,
        "coefficients": [float(res.coefficients[k]) for k in window_lags],
        "significant_lags": significant,
        "consecutive_run": run,
        "min_consecutive": config.acf_min_consecutive,
    }
    return AlertEvent(
        "excess_correlation",
        severity,
        0,
        res.n - 1,
        evidence,
        f"excess autocorrelation at lags {run[0]}..{run[-1]} "
        f"(|r| > {fmt(band)}, n = {res.n})",
    )


def trend_scan(series: TelemetrySeries, config: MonitorConfig = MonitorConfig()) -> Optional[AlertEvent]:
    """Alert when the QBER-vs-time slope exceeds ``trend_slope_sigma`` standard errors."""
    if len(series) < MIN_TREND_POINTS:
        raise UsageError(f"trend scan needs at least {MIN_TREND_POINTS} records, got {len(series)}")
    t = series.timestamps
    fit = linear_regression(t, series.qber)
    threshold = config.trend_slope_sigma * fit.slope_stderr
    if not abs(fit.slope) > threshold:
        return None
    horizon = float(t[-1] + TREND_HORIZON_S)
    predicted = float(forecast(fit, [horizon])[0])
    # exact fits have zero stderr; None keeps the evidence valid JSON
    t_stat = fit.slope / fit.slope_stderr if fit.slope_stderr > 0 else None
    severity: Severity = "critical" if predicted >= config.qber_limit else "warning"
    evidence = {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_stderr": fit.slope_stderr,
        "sigma": config.trend_slope_sigma,
        "t_statistic": t_stat,
        "horizon_timestamp": horizon,
        "forecast_qber": predicted,
        "n": fit.n,
    }
    direction = "rising" if fit.slope > 0 else "falling"
    return AlertEvent(
        "trend",
        severity,
        0,
        len(series) - 1,
        evidence,
        f"QBER {direction} at {fmt(fit.slope * 3600 * 100)} %/h; "
        f"forecast {fmt(100 * predicted)} % in 24 h",
    )


def scan_all(series: TelemetrySeries, config: MonitorConfig = MonitorConfig()) -> list[AlertEvent]:
    """All detectors on one series; detectors whose preconditions fail are skipped."""
    alerts = threshold_scan(series, config)
    lo, hi = config.acf_lag_window
    if len(series) >= hi + 2:
        try:
            hit = excess_correlation_scan(series.qber, config)
        except DataError as exc:
            log.debug("excess correlation scan skipped: %s", exc)
        else:
            if hit is not None:
                alerts.append(hit)
    if len(series) >= MIN_TREND_POINTS:
        try:
            hit = trend_scan(series, config)
        except DataError as exc:
            log.debug("trend scan skipped: %s", exc)
        else:
            if hit is not None:
                alerts.append(hit)
    return alerts


# --- key budget and clock normalization ----------------------------------------

@dataclass(frozen=True)
class KeyBudget:
    skr_bps: float
    key_len_bits: int
    keys_per_minute: int
    duration_s: float
    total_key_bits: float


def keys_per_minute(skr_bps: float, key_len_bits: int = 256) -> int:
    """Whole keys of ``key_len_bits`` that ``skr_bps`` can refresh per minute."""
    if not skr_bps > 0 or not key_len_bits > 0:
        raise UsageError("skr_bps and key_len_bits must both be positive")
    ratio = skr_bps * 60.0 / key_len_bits
    k = math.floor(ratio)
    # absorb float error such as 256/60 * 60 landing just under an integer
    if math.isclose(ratio, k + 1, rel_tol=1e-12, abs_tol=0.0):
        k += 1
    return k


def key_budget(skr_bps: float, duration_s: float, key_len_bits: int = 256) -> KeyBudget:
    if duration_s < 0:
        raise UsageError("duration_s must be non-negative")
    kpm = keys_per_minute(skr_bps, key_len_bits) if skr_bps > 0 else 0
    return KeyBudget(skr_bps, key_len_bits, kpm, duration_s, skr_bps * duration_s)


def normalized_skr(skr_bps: float, clock_hz: float) -> float:
    """SKR scaled to a 100 MHz clock, in bit/s per 100 MHz."""
    if not skr_bps > 0 or not clock_hz > 0:
        raise UsageError("skr_bps and clock_hz must both be positive")
    return skr_bps * (REFERENCE_CLOCK_HZ / clock_hz)


# --- reference table -----------------------------------------------------------

@dataclass(frozen=True)
class ReferenceRow:
    length_km: Optional[float]
    skr_bps: float
    detector: Optional[Literal["SPAD", "SSPD"]]
    loss_db: Optional[float]
    qber_percent: float
    group: str


# Field-tested long-range QKD systems: Kazan lines first, then international
# commercial systems.
REFERENCE_TABLE: tuple[ReferenceRow, ...] = (
    ReferenceRow(12, 2e4, "SPAD", 7, 4, "Russia"),
    ReferenceRow(143, 12, "SSPD", 37, 2, "Russia"),
    ReferenceRow(67, 60, "SPAD", 14, 6, "Switzerland"),
    ReferenceRow(45, 3e5, "SPAD", 14, 4, "Japan"),
    ReferenceRow(66, 5e5, "SPAD", 21, 5, "China"),
    ReferenceRow(97, 800, "SSPD", 33, 3, "Japan"),
    ReferenceRow(90, 1e3, "SSPD", 30, 3, "Japan"),
)


def analyzed_row(
    series: TelemetrySeries,
    length_km: Optional[float] = None,
    detector: Optional[Literal["SPAD", "SSPD"]] = None,
) -> ReferenceRow:
    loss = series.loss
    loss_db = float(np.nanmean(loss)) if np.any(~np.isnan(loss)) else None
    return ReferenceRow(
        length_km,
        float(series.skr.mean()),
        detector,
        loss_db,
        float(100 * series.qber.mean()),
        series.link_id or "analyzed",
    )


# --- report ----------------------------------------------------------------------

@dataclass(frozen=True)
class Report:
    text: str
    summary: dict[str, Any]

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"


def _section(fn, *args, **kwargs) -> dict[str, Any]:
    try:
        out = fn(*args, **kwargs)
    except QSentinelError as exc:
        return {"available": False, "error": str(exc)}
    out["available"] = True
    return out


def _stats_section(series: TelemetrySeries) -> dict[str, Any]:
    out = {}
    for name, values in (("qber", series.qber), ("skr_bps", series.skr)):
        s = summary_stats(values)
        out[name] = {"mean": s.mean, "std": s.std, "min": s.min, "max": s.max, "span": s.span, "n": s.n}
    return out


def _bands_section(series: TelemetrySeries, window: int, levels: Sequence[float]) -> dict[str, Any]:
    band = percentile_level_filter(series.qber, window, levels)
    return {
        "window": window,
        "levels": list(band.levels),
        "first": [float(v) for v in band.bands[:, 0]],
        "last": [float(v) for v in band.bands[:, -1]],
    }


def _acf_section(series: TelemetrySeries, max_lag: int) -> dict[str, Any]:
    res = acf(series.qber, max_lag)
    return {
        "max_lag": res.max_lag,
        "n": res.n,
        "band": res.white_noise_band,
        "coefficients": [float(v) for v in res.coefficients],
    }


def _budget_section(series: TelemetrySeries, clock_hz: float, key_len_bits: int) -> dict[str, Any]:
    skr = float(series.skr.mean())
    t = series.timestamps
    budget = key_budget(skr, float(t[-1] - t[0]), key_len_bits)
    return {
        "mean_skr_bps": skr,
        "key_len_bits": key_len_bits,
        "keys_per_minute": budget.keys_per_minute,
        "duration_s": budget.duration_s,
        "total_key_bits": budget.total_key_bits,
        "clock_hz": clock_hz,
        "normalized_skr_per_100mhz": normalized_skr(skr, clock_hz),
    }


def _qp_section(timetags: TimeTagSeries, grid_size: int) -> dict[str, Any]:
    cmp = compare_randomness(timetags.as_array(), grid_size)
    return {
        "n": len(timetags),
        "grid_size": grid_size,
        "log_pearson": cmp.log_pearson,
        "q_min": cmp.q_min,
        "p_star": cmp.p_star,
        "delta": cmp.delta,
    }


def _row_dict(row: ReferenceRow) -> dict[str, Any]:
    return asdict(row)


def build_report(
    series: TelemetrySeries,
    timetags: Optional[TimeTagSeries] = None,
    config: MonitorConfig = MonitorConfig(),
    *,
    levels: Sequence[float] = DEFAULT_LEVELS,
    max_lag: int = 20,
    grid_size: int = DEFAULT_GRID_SIZE,
    clock_hz: float = REFERENCE_CLOCK_HZ,
    key_len_bits: int = 256,
) -> Report:
    """
    Aggregate every diagnostic into a text report and a JSON-ready summary.

    Sections whose computation raises a data or usage error are kept but
    marked ``available: false`` with the error message. The text is rendered
    from the summary, so every number in it is the 9-significant-digit form
    of a summary value.
    """
    series.require_nonempty()
    alerts = scan_all(series, config)
    summary: dict[str, Any] = {
        "link_id": series.link_id,
        "n_records": len(series),
        "qber_limit": config.qber_limit,
        "stats": _section(_stats_section, series),
        "percentile_bands": _section(_bands_section, series, config.percentile_window, levels),
        "acf": _section(_acf_section, series, max_lag),
        "alerts": [a.to_dict() for a in alerts],
        "key_budget": _section(_budget_section, series, clock_hz, key_len_bits),
        "qp": (
            _section(_qp_section, timetags, grid_size)
            if timetags is not None
            else {"available": False, "error": "no time tags supplied"}
        ),
        "reference_table": [_row_dict(r) for r in REFERENCE_TABLE],
        "analyzed_row": _row_dict(analyzed_row(series)),
    }
    return Report(render_report(summary), summary)


def _unavailable(sec: dict[str, Any]) -> Optional[str]:
    return None if sec.get("available") else f"  unavailable: {sec.get('error')}"


def _cell(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return fmt(v)


def render_report(summary: dict[str, Any]) -> str:
    out = [f"# qsentinel report: {summary['link_id'] or 'link'} ({summary['n_records']} records)", ""]

    out.append("## Summary statistics")
    sec = summary["stats"]
    if (msg := _unavailable(sec)) is not None:
        out.append(msg)
    else:
        for name in ("qber", "skr_bps"):
            s = sec[name]
            out.append(
                f"  {name}: mean {fmt(s['mean'])}  std {fmt(s['std'])}  "
                f"min {fmt(s['min'])}  max {fmt(s['max'])}  span {fmt(s['span'])}"
            )
    out.append("")

    out.append("## Percentile level filters")
    sec = summary["percentile_bands"]
    if (msg := _unavailable(sec)) is not None:
        out.append(msg)
    else:
        out.append(f"  window {sec['window']}")
        for lv, first, last in zip(sec["levels"], sec["first"], sec["last"]):
            out.append(f"  p{fmt(lv)}: first {fmt(first)}  last {fmt(last)}")
    out.append("")

    out.append("## Autocorrelation of QBER deviations")
    sec = summary["acf"]
    if (msg := _unavailable(sec)) is not None:
        out.append(msg)
    else:
        out.append(f"  n {sec['n']}  white-noise band +/-{fmt(sec['band'])}")
        for k, r in enumerate(sec["coefficients"]):
            flag = " *" if k > 0 and abs(r) > sec["band"] else ""
            out.append(f"  lag {k}: {fmt(r)}{flag}")
    out.append("")

    alerts = summary["alerts"]
    out.append(f"## Alerts ({len(alerts)})")
    if not alerts:
        out.append("  none")
    for a in alerts:
        out.append(f"  [{a['severity']}] {a['kind']} {a['start_index']}..{a['end_index']}: {a['message']}")
    out.append("")

    out.append("## Key budget")
    sec = summary["key_budget"]
    if (msg := _unavailable(sec)) is not None:
        out.append(msg)
    else:
        out.append(f"  mean SKR {fmt(sec['mean_skr_bps'])} bit/s")
        out.append(f"  {sec['key_len_bits']}-bit keys per minute: {sec['keys_per_minute']}")
        out.append(f"  duration {fmt(sec['duration_s'])} s, total key {fmt(sec['total_key_bits'])} bit")
        out.append(
            f"  normalized SKR {fmt(sec['normalized_skr_per_100mhz'])} bit/s per 100 MHz "
            f"(clock {fmt(sec['clock_hz'])} Hz)"
        )
    out.append("")

    out.append("## Q_p randomness comparison")
    sec = summary["qp"]
    if (msg := _unavailable(sec)) is not None:
        out.append(msg)
    else:
        out.append(f"  n {sec['n']}  grid {sec['grid_size']}")
        out.append(f"  log10 Pearson r(1): {fmt(sec['log_pearson'])}")
        out.append(f"  min_p Q_p: {fmt(sec['q_min'])} at p = {fmt(sec['p_star'])}")
        out.append(f"  delta: {fmt(sec['delta'])}")
    out.append("")

    out.append("## Reference links")
    header = ("length_km", "skr_bps", "detector", "loss_db", "qber_percent", "group")
    out.append("  " + " | ".join(header))
    for row in summary["reference_table"]:
        out.append("  " + " | ".join(_cell(row[h]) for h in header))
    row = summary["analyzed_row"]
    out.append("  " + " | ".join(_cell(row[h]) for h in header) + "  <- analyzed")
    return "\n".join(out) + "\n"


# --- incremental watching ----------------------------------------------------------

@dataclass(frozen=True)
class WatchState:
    """Snapshot of a background monitor. Never mutated; ``watch_step`` returns a new one."""

    series: TelemetrySeries = field(default_factory=lambda: TelemetrySeries(()))
    emitted: frozenset[tuple[str, int]] = frozenset()
    alerts: tuple[AlertEvent, ...] = ()


def _checkpoint_alerts(
    prefix: TelemetrySeries, config: MonitorConfig, seen: set[tuple[str, int]]
) -> list[AlertEvent]:
    fresh = []
    for alert in scan_all(prefix, config):
        if alert.key not in seen:
            seen.add(alert.key)
            fresh.append(alert)
    return fresh


def watch_step(
    state: WatchState,
    new_records: Sequence[TelemetryRecord],
    config: MonitorConfig = MonitorConfig(),
) -> tuple[WatchState, list[AlertEvent]]:
    """
    Absorb ``new_records`` and run the detectors at every checkpoint crossed.

    Checkpoints fall on series lengths that are multiples of
    ``recompute_every``, whatever the batch boundaries, so folding this over
    any partition of a series matches ``batch_alerts`` on the whole of it.
    Alerts are de-duplicated on (kind, start_index).
    """
    if not new_records:
        return state, []
    try:
        series = state.series.extended(new_records)
    except DataError as exc:
        raise DataError(f"watch input rejected: {exc}") from None
    old_n, new_n = len(state.series), len(series)
    step = config.recompute_every
    seen = set(state.emitted)
    fresh: list[AlertEvent] = []
    for c in range((old_n // step + 1) * step, new_n + 1, step):
        fresh.extend(_checkpoint_alerts(series.head(c), config, seen))
    return WatchState(series, frozenset(seen), state.alerts + tuple(fresh)), fresh


def batch_alerts(series: TelemetrySeries, config: MonitorConfig = MonitorConfig()) -> list[AlertEvent]:
    """The alert set that background watching emits for the whole of ``series``."""
    seen: set[tuple[str, int]] = set()
    out: list[AlertEvent] = []
    step = config.recompute_every
    for c in range(step, len(series) + 1, step):
        out.extend(_checkpoint_alerts(series.head(c), config, seen))
    return out
