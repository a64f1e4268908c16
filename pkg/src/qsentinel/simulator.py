"""
Synthetic link telemetry and raw-key time tags.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` (what
``numpy.random.default_rng(seed)`` builds), whose streams are fixed across
platforms, so every series here is bit-reproducible for a given seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import log_ndtr

from .errors import UsageError
from .telemetry import TelemetryRecord, TelemetrySeries, TimeTagSeries

SECONDS_PER_DAY = 86_400.0
# SKR falls by this fraction of base rate per unit relative QBER excess
SKR_QBER_COUPLING = 0.25

DisturbanceKind = Literal["level_shift", "extra_ar_correlation", "variance_burst"]
DISTURBANCE_KINDS = ("level_shift", "extra_ar_correlation", "variance_burst")


@dataclass(frozen=True)
class LinkProfile:
    """Parameters of the synthetic QBER/SKR generator (QBER as fractions)."""

    qber_mean: float = 0.02
    qber_amplitude: float = 0.005
    ar_coefficient: float = 0.6
    noise_std: float = 0.0025
    clip_range: tuple[float, float] = (0.001, 0.06)
    sample_interval_s: float = 330.0
    skr_base_bps: float = 12.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "clip_range", tuple(float(c) for c in self.clip_range))
        low, high = self.clip_range
        if not 0.0 <= low < self.qber_mean < high <= 1.0:
            raise UsageError(
                f"need 0 <= clip low < qber_mean < clip high <= 1, "
                f"got {low!r} < {self.qber_mean!r} < {high!r}"
            )
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise UsageError(f"ar_coefficient must lie in [0, 1), got {self.ar_coefficient!r}")
        if self.noise_std < 0 or self.qber_amplitude < 0:
            raise UsageError("noise_std and qber_amplitude must be non-negative")
        if not self.sample_interval_s > 0:
            raise UsageError("sample_interval_s must be positive")
        if self.skr_base_bps < 0:
            raise UsageError("skr_base_bps must be non-negative")


def ar1_noise(rng: np.random.Generator, n: int, phi: float, std: float) -> np.ndarray:
    """Stationary Gaussian AR(1) path with marginal standard deviation ``std``."""
    z = rng.standard_normal(n)
    innov = z * (std * math.sqrt(1.0 - phi * phi))
    innov[0] = z[0] * std  # draw the start from the stationary law
    return lfilter([1.0], [1.0, -phi], innov)


def simulate_qber(profile: LinkProfile, n: int) -> TelemetrySeries:
    if int(n) != n or n < 1:
        raise UsageError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.default_rng(profile.seed)
    t = np.arange(n) * profile.sample_interval_s
    diurnal = profile.qber_amplitude * np.sin(2.0 * np.pi * t / SECONDS_PER_DAY)
    noise = ar1_noise(rng, n, profile.ar_coefficient, profile.noise_std)
    q = np.clip(profile.qber_mean + diurnal + noise, *profile.clip_range)
    rel_excess = (q - profile.qber_mean) / profile.qber_mean
    skr = np.maximum(profile.skr_base_bps * (1.0 - SKR_QBER_COUPLING * rel_excess), 0.0)
    records = tuple(
        TelemetryRecord(float(ti), float(qi), float(si)) for ti, qi, si in zip(t, q, skr)
    )
    return TelemetrySeries(records, link_id=f"sim-{profile.seed}")


def simulate_timetags(
    rate_hz: float, n: int, ar_coefficient: float = 0.0, seed: int = 0
) -> TimeTagSeries:
    """
    Exponential inter-arrival times with mean ``1/rate_hz``.

    With ``ar_coefficient > 0`` a unit-variance Gaussian AR(1) sequence is
    pushed through the normal CDF and then the exponential quantile
    function, so the marginal stays exponential while neighbouring
    intervals become correlated.
    """
    if not (math.isfinite(rate_hz) and rate_hz > 0):
        raise UsageError(f"rate_hz must be positive, got {rate_hz!r}")
    if int(n) != n or n < 2:
        raise UsageError(f"n must be an integer >= 2, got {n!r}")
    if not 0.0 <= ar_coefficient < 1.0:
        raise UsageError(f"ar_coefficient must lie in [0, 1), got {ar_coefficient!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    if ar_coefficient == 0.0:
        y = rng.exponential(1.0 / rate_hz, n)
    else:
        z = ar1_noise(rng, n, ar_coefficient, 1.0)
        # survival form: -log(1 - Phi(z)) = -log Phi(-z), stable in both tails
        y = -log_ndtr(-z) / rate_hz
    y = np.maximum(y, np.finfo(float).tiny)
    return TimeTagSeries(tuple(y.tolist()), source_id=f"sim-{seed}")


@dataclass(frozen=True)
class DisturbanceSpec:
    start_index: int
    end_index: int  # exclusive
    kind: DisturbanceKind
    magnitude: float

    def __post_init__(self) -> None:
        if self.kind not in DISTURBANCE_KINDS:
            raise UsageError(f"unknown disturbance kind {self.kind!r}")
        if not 0 <= self.start_index < self.end_index:
            raise UsageError(
                f"need 0 <= start_index < end_index, got {self.start_index}, {self.end_index}"
            )
        if self.kind == "extra_ar_correlation" and not 0.0 <= self.magnitude < 1.0:
            raise UsageError("extra_ar_correlation magnitude must lie in [0, 1)")
        if self.kind == "variance_burst" and self.magnitude < 0:
            raise UsageError("variance_burst magnitude must be non-negative")


def inject_disturbance(series: TelemetrySeries, spec: DisturbanceSpec) -> TelemetrySeries:
    """
    Apply a ground-truth disturbance to QBER on ``[start_index, end_index)``.

    * ``level_shift``: adds ``magnitude``.
    * ``variance_burst``: scales deviations from the segment mean by ``magnitude``.
    * ``extra_ar_correlation``: re-filters segment residuals through a
      variance-preserving AR(1) with coefficient ``magnitude``.

    Results are clipped back to [0, 1]; SKR and timestamps are untouched.
    """
    if spec.end_index > len(series):
        raise UsageError(f"end_index {spec.end_index} exceeds series length {len(series)}")
    q = series.qber
    a, b = spec.start_index, spec.end_index
    seg = q[a:b]
    if spec.kind == "level_shift":
        new = seg + spec.magnitude
    elif spec.kind == "variance_burst":
        mu = seg.mean()
        new = mu + spec.magnitude * (seg - mu)
    else:
        phi = spec.magnitude
        mu = seg.mean()
        if phi == 0.0:
            new = seg
        else:
            new = mu + lfilter([math.sqrt(1.0 - phi * phi)], [1.0, -phi], seg - mu)
    q = q.copy()
    q[a:b] = np.clip(new, 0.0, 1.0)
    records = tuple(
        TelemetryRecord(r.timestamp, float(qi), r.skr_bps, r.loss_db)
        for r, qi in zip(series.records, q)
    )
    return TelemetrySeries(records, series.link_id)


def shuffle_surrogate(values: Sequence[float], seed: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise UsageError("cannot shuffle an empty sequence")
    return np.random.default_rng(seed).permutation(arr)
