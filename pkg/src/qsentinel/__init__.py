"""qsentinel: prognostic diagnostics for long-haul QKD link telemetry."""

__version__ = "0.1.0"

from .errors import DataError, QSentinelError, UsageError
from .monitor import (
    REFERENCE_TABLE,
    AlertEvent,
    KeyBudget,
    MonitorConfig,
    Report,
    ReferenceRow,
    WatchState,
    batch_alerts,
    build_report,
    excess_correlation_scan,
    key_budget,
    keys_per_minute,
    normalized_skr,
    threshold_scan,
    trend_scan,
    watch_step,
)
from .rankstat import (
    QpCurve,
    RandomnessComparison,
    SignSequence,
    compare_randomness,
    log_pearson,
    min_qp,
    qp,
    qp_curve,
    sign_transform,
)
from .simulator import (
    DisturbanceSpec,
    LinkProfile,
    inject_disturbance,
    shuffle_surrogate,
    simulate_qber,
    simulate_timetags,
)
from .stats import (
    AcfResult,
    PercentileBand,
    RegressionFit,
    SummaryStats,
    acf,
    forecast,
    linear_regression,
    pearson_autocorr,
    percentile_level_filter,
    summary_stats,
)
from .telemetry import (
    HistoryTail,
    TelemetryRecord,
    TelemetrySeries,
    TimeTagSeries,
    append_history,
    parse_telemetry_csv,
    parse_timetags,
    read_history,
    write_telemetry_csv,
    write_timetags,
)
