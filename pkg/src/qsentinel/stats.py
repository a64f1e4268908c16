"""
Classical time-series diagnostics for QBER telemetry.

Moving percentile level filters, sample autocorrelation of deviations from
the mean, lagged Pearson correlation, and ordinary least squares trends.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError

DEFAULT_LEVELS = (25.0, 50.0, 75.0)
DEFAULT_WINDOW = 50
WHITE_NOISE_Z = 1.96


def _as_1d(values: Sequence[float], name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional")
    if arr.size == 0:
        raise UsageError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def window_bounds(i: int, n: int, window: int) -> tuple[int, int]:
    """Inclusive bounds of the centered window around ``i``, truncated to [0, n-1]."""
    lo = max(0, i - window // 2)
    hi = min(n - 1, i + (window + 1) // 2 - 1)
    return lo, hi


def nearest_rank(level: float, m: int) -> int:
    """1-based nearest rank ceil(level/100 * m), evaluated exactly on the decimal level."""
    rank = math.ceil(Fraction(str(level)) * m / 100)
    return min(max(rank, 1), m)


@dataclass(frozen=True, eq=False)
class PercentileBand:
    levels: tuple[float, ...]
    window: int
    bands: np.ndarray  # shape (len(levels), n)

    def __getitem__(self, level: float) -> np.ndarray:
        for k, lv in enumerate(self.levels):
            if lv == level:
                return self.bands[k]
        raise KeyError(level)

    def __len__(self) -> int:
        return self.bands.shape[1]


def percentile_level_filter(
    values: Sequence[float],
    window: int = DEFAULT_WINDOW,
    levels: Sequence[float] = DEFAULT_LEVELS,
) -> PercentileBand:
    """
    Moving nearest-rank percentiles over a centered, boundary-truncated window.

    The window around index ``i`` spans ``i - window//2`` through
    ``i + ceil(window/2) - 1``, so every band has the same length as the input.
    A sorted copy of the window is updated incrementally as it slides.
    """
    y = _as_1d(values)
    if int(window) != window or window < 1:
        raise UsageError(f"window must be a positive integer, got {window!r}")
    window = int(window)
    levels = tuple(float(lv) for lv in levels)
    if not levels:
        raise UsageError("at least one percentile level is required")
    for lv in levels:
        if not 0.0 < lv < 100.0:
            raise UsageError(f"percentile level must lie in (0, 100), got {lv!r}")

    n = y.size
    out = np.empty((len(levels), n))
    ranks_by_size: dict[int, list[int]] = {}
    sorted_win: list[float] = []
    cur_lo, cur_hi = 0, -1  # current window is y[cur_lo..cur_hi]
    for i in range(n):
        lo, hi = window_bounds(i, n, window)
        while cur_hi < hi:
            cur_hi += 1
            bisect.insort(sorted_win, y[cur_hi])
        while cur_lo < lo:
            del sorted_win[bisect.bisect_left(sorted_win, y[cur_lo])]
            cur_lo += 1
        m = len(sorted_win)
        ranks = ranks_by_size.get(m)
        if ranks is None:
            ranks = ranks_by_size[m] = [nearest_rank(lv, m) for lv in levels]
        for k, r in enumerate(ranks):
            out[k, i] = sorted_win[r - 1]
    return PercentileBand(levels, window, out)


@dataclass(frozen=True, eq=False)
class AcfResult:
    max_lag: int
    coefficients: np.ndarray  # r(0..max_lag)
    n: int
    white_noise_band: float

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.max_lag + 1)


def acf(values: Sequence[float], max_lag: int) -> AcfResult:
    """
    Biased sample autocorrelation of deviations from the series mean.

    r(k) = sum_{i<n-k} d_i d_{i+k} / sum_i d_i^2 with d = y - mean(y).
    """
    y = _as_1d(values)
    n = y.size
    if int(max_lag) != max_lag or max_lag < 1:
        raise UsageError(f"max_lag must be a positive integer, got {max_lag!r}")
    max_lag = int(max_lag)
    if max_lag >= n - 1:
        raise UsageError(f"max_lag {max_lag} requires at least {max_lag + 2} samples, got {n}")
    if np.all(y == y[0]):
        raise DataError("zero variance")
    d = y - y.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DataError("zero variance")
    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = np.dot(d[: n - k], d[k:]) / denom
    return AcfResult(max_lag, r, n, WHITE_NOISE_Z / math.sqrt(n))


def pearson_autocorr(values: Sequence[float], lag: int = 1) -> float:
    """Pearson correlation between y[:n-lag] and y[lag:], each with its own mean."""
    y = _as_1d(values)
    if int(lag) != lag or lag < 1:
        raise UsageError(f"lag must be a positive integer, got {lag!r}")
    lag = int(lag)
    n = y.size
    if n < lag + 2:
        raise UsageError(f"lag {lag} requires at least {lag + 2} samples, got {n}")
    a = y[: n - lag]
    b = y[lag:]
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DataError("zero variance in lagged subsequence")
    a = a - a.mean()
    b = b - b.mean()
    saa = float(np.dot(a, a))
    sbb = float(np.dot(b, b))
    if saa == 0.0 or sbb == 0.0:
        raise DataError("zero variance in lagged subsequence")
    r = float(np.dot(a, b)) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    residual_std: float
    n: int
    slope_stderr: float = 0.0

    def predict(self, xs: Sequence[float]) -> np.ndarray:
        return forecast(self, xs)


def linear_regression(xs: Sequence[float], ys: Sequence[float]) -> RegressionFit:
    x = _as_1d(xs, "xs")
    y = _as_1d(ys, "ys")
    if x.size != y.size:
        raise UsageError(f"xs and ys differ in length ({x.size} vs {y.size})")
    n = x.size
    if n < 2:
        raise UsageError("regression needs at least 2 points")
    if np.all(x == x[0]):
        raise DataError("degenerate xs: all values equal")
    x_mean = x.mean()
    y_mean = y.mean()
    dx = x - x_mean
    sxx = float(np.dot(dx, dx))
    slope = float(np.dot(dx, y - y_mean)) / sxx
    intercept = float(y_mean - slope * x_mean)
    if n > 2:
        resid = y - (slope * x + intercept)
        residual_std = math.sqrt(float(np.dot(resid, resid)) / (n - 2))
    else:
        residual_std = 0.0
    return RegressionFit(slope, intercept, residual_std, n, residual_std / math.sqrt(sxx))


def forecast(fit: RegressionFit, xs_future: Sequence[float]) -> np.ndarray:
    return fit.slope * np.asarray(xs_future, dtype=float) + fit.intercept


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    min: float
    max: float
    span: float
    n: int


def summary_stats(values: Sequence[float]) -> SummaryStats:
    y = _as_1d(values)
    lo = float(y.min())
    hi = float(y.max())
    std = float(np.std(y, ddof=1)) if y.size >= 2 else 0.0
    return SummaryStats(float(y.mean()), std, lo, hi, hi - lo, int(y.size))
