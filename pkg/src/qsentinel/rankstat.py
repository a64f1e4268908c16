"""
Rank-statistic randomness quality factor for raw-key time tags.

For a threshold ``p`` the series is mapped to signs ``x_k = sign(y_k - p)``
and the quality factor is::

    Q_p = log10( mean_k ceil(x_k * x_{k+1}) )

over the ``n - 1`` adjacent pairs. The products only take the values -1, 0
and +1, on which ceil is the identity, so Q_p is the log of the plain mean
adjacent sign product. Q_p = 0 means every neighbouring pair sits on the
same side of ``p``; the more often neighbours straddle ``p`` the lower
Q_p gets. When the mean product is zero or negative the logarithm is not
defined and ``None`` is returned instead of a NaN or -inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UsageError
from .stats import _as_1d, pearson_autocorr

DEFAULT_GRID_SIZE = 201


@dataclass(frozen=True, eq=False)
class SignSequence:
    signs: np.ndarray  # int8 in {-1, 0, +1}
    threshold_p: float


def sign_transform(values: Sequence[float], p: float) -> SignSequence:
    y = _as_1d(values)
    return SignSequence(np.sign(y - p).astype(np.int8), float(p))


def mean_adjacent_product(signs: np.ndarray) -> float:
    # int64 sum keeps the numerator exact before the single division
    prod = signs[:-1].astype(np.int64) * signs[1:]
    return int(prod.sum()) / (signs.size - 1)


def qp(values: Sequence[float], p: float) -> Optional[float]:
    """Q_p of ``values`` at threshold ``p``, or None where the mean product is <= 0."""
    y = _as_1d(values)
    if y.size < 2:
        raise UsageError("Q_p needs at least 2 values")
    m = mean_adjacent_product(np.sign(y - p).astype(np.int8))
    if m <= 0:
        return None
    return math.log10(m)


@dataclass(frozen=True, eq=False)
class QpCurve:
    p_grid: np.ndarray
    q_values: tuple[Optional[float], ...]
    n: int

    def defined(self) -> list[tuple[float, float]]:
        return [(float(p), q) for p, q in zip(self.p_grid, self.q_values) if q is not None]


def qp_curve(values: Sequence[float], grid_size: int = DEFAULT_GRID_SIZE) -> QpCurve:
    """Q_p on ``grid_size`` evenly spaced thresholds spanning [min, max] inclusive."""
    y = _as_1d(values)
    if y.size < 2:
        raise UsageError("Q_p needs at least 2 values")
    if int(grid_size) != grid_size or grid_size < 2:
        raise UsageError(f"grid_size must be an integer >= 2, got {grid_size!r}")
    lo, hi = float(y.min()), float(y.max())
    if lo == hi:
        raise DataError("constant input gives a degenerate threshold grid")
    grid = np.linspace(lo, hi, int(grid_size))
    grid[0], grid[-1] = lo, hi
    return QpCurve(grid, tuple(qp(y, p) for p in grid), int(y.size))


def min_qp(curve: QpCurve) -> tuple[float, float]:
    """(p_star, q_min) over defined entries; ties go to the smallest p."""
    best: Optional[tuple[float, float]] = None
    for p, q in curve.defined():
        if best is None or q < best[1]:
            best = (p, q)
    if best is None:
        raise DataError("Q_p undefined on entire grid")
    return best


def log_pearson(values: Sequence[float]) -> Optional[float]:
    """log10 of the lag-1 Pearson autocorrelation, or None when it is not positive."""
    y = _as_1d(values)
    if y.size < 3:
        raise UsageError("log_pearson needs at least 3 values")
    r = pearson_autocorr(y, 1)
    if r <= 0:
        return None
    return math.log10(r)


@dataclass(frozen=True)
class RandomnessComparison:
    log_pearson: Optional[float]
    q_min: Optional[float]
    p_star: Optional[float]
    delta: Optional[float]


def compare_randomness(
    values: Sequence[float],
    grid_size: int = DEFAULT_GRID_SIZE,
    curve: Optional[QpCurve] = None,
) -> RandomnessComparison:
    """
    Compare log10 Pearson lag-1 autocorrelation against min_p Q_p.

    ``delta = log_pearson - q_min``; any side that is undefined leaves
    ``delta`` undefined. Pass ``curve`` to reuse an already computed curve.
    """
    lp = log_pearson(values)
    if curve is None:
        curve = qp_curve(values, grid_size)
    try:
        p_star, q_min = min_qp(curve)
    except DataError:
        p_star, q_min = None, None
    delta = lp - q_min if lp is not None and q_min is not None else None
    return RandomnessComparison(lp, q_min, p_star, delta)
