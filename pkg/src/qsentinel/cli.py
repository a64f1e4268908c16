"""
qsentinel command line.

Exit status: 0 success, 1 usage error, 2 data error, 3 success with alerts
(``analyze`` / ``watch`` with ``--check``). Set ``QSENTINEL_LOG`` to a
logging level name (e.g. DEBUG) for diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import __version__
from ._format import fmt
from .errors import DataError, UsageError
from .monitor import MonitorConfig, WatchState, build_report, watch_step
from .plots import export_plot
from .rankstat import DEFAULT_GRID_SIZE, compare_randomness, qp_curve
from .simulator import LinkProfile, simulate_qber, simulate_timetags
from .stats import acf, percentile_level_filter
from .telemetry import (
    HistoryTail,
    TelemetrySeries,
    TimeTagSeries,
    append_history,
    parse_telemetry_csv,
    parse_timetags,
    read_history,
    write_telemetry_csv,
    write_timetags,
)

log = logging.getLogger("qsentinel")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ALERTS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _levels(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad percentile list {text!r}") from None


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_series(path: str) -> TelemetrySeries:
    link_id = "" if path == "-" else Path(path).stem
    return parse_telemetry_csv(_read_text(path), link_id)


def _load_timetags(path: Optional[str]) -> Optional[TimeTagSeries]:
    if path is None:
        return None
    return parse_timetags(_read_text(path), Path(path).stem)


def _config(args: argparse.Namespace) -> MonitorConfig:
    return MonitorConfig(qber_limit=args.qber_limit, percentile_window=args.window)


# --- subcommands -------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    series = _load_series(args.input)
    if Path(args.output).exists():
        existing = read_history(args.output)
        if len(existing) and not series.records[0].timestamp > existing.records[-1].timestamp:
            raise DataError(
                f"first input timestamp {series.records[0].timestamp!r} does not follow "
                f"last logged timestamp {existing.records[-1].timestamp!r}"
            )
    for rec in series.records:
        append_history(rec, args.output)
    print(f"appended {len(series)} records to {args.output}", file=sys.stderr)
    return EXIT_OK


def _report(args: argparse.Namespace):
    series = _load_series(args.input)
    return build_report(
        series,
        _load_timetags(args.timetags),
        _config(args),
        levels=args.levels,
        max_lag=args.max_lag,
        grid_size=args.grid,
        clock_hz=args.clock_hz,
    )


def cmd_analyze(args: argparse.Namespace) -> int:
    report = _report(args)
    _write_text(args.output, report.text)
    if args.check and report.summary["alerts"]:
        return EXIT_ALERTS
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = _report(args)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_text(str(out_dir / "report.txt"), report.text)
    _write_text(str(out_dir / "summary.json"), report.summary_json())
    print(f"wrote {out_dir / 'report.txt'} and {out_dir / 'summary.json'}", file=sys.stderr)
    return EXIT_OK


def cmd_qp(args: argparse.Namespace) -> int:
    tags = parse_timetags(_read_text(args.input))
    values = tags.as_array()
    curve = qp_curve(values, args.grid)
    cmp = compare_randomness(values, args.grid, curve=curve)
    lines = [
        f"n {len(tags)}  grid {args.grid}",
        f"log10 Pearson r(1): {fmt(cmp.log_pearson)}",
        f"min_p Q_p: {fmt(cmp.q_min)} at p = {fmt(cmp.p_star)}",
        f"delta: {fmt(cmp.delta)}",
    ]
    if args.output:
        export_plot(args.output, "csv", curve=curve)
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.kind == "timetags":
        tags = simulate_timetags(
            args.rate, args.n, 0.0 if args.ar is None else args.ar, args.seed
        )
        _write_text(args.output, write_timetags(tags))
        return EXIT_OK
    defaults = LinkProfile()
    profile = LinkProfile(
        qber_mean=args.qber_mean,
        qber_amplitude=args.amplitude,
        ar_coefficient=defaults.ar_coefficient if args.ar is None else args.ar,
        noise_std=args.noise_std,
        sample_interval_s=args.interval,
        skr_base_bps=args.skr_base,
        seed=args.seed,
    )
    _write_text(args.output, write_telemetry_csv(simulate_qber(profile, args.n)))
    return EXIT_OK


def cmd_watch(args: argparse.Namespace) -> int:
    config = _config(args)
    tail = HistoryTail(args.input)
    state = WatchState()
    sink: TextIO = sys.stdout
    if args.output and args.output != "-":
        sink = open(args.output, "a", encoding="utf-8", newline="\n")
    polls = 0
    try:
        while True:
            new = tail.poll()
            state, alerts = watch_step(state, new, config)
            for alert in alerts:
                sink.write(alert.to_json() + "\n")
            sink.flush()
            polls += 1
            if args.max_polls is not None and polls >= args.max_polls:
                break
            time.sleep(args.poll_seconds)
    except KeyboardInterrupt:
        pass
    finally:
        if sink is not sys.stdout:
            sink.close()
    if args.check and state.alerts:
        return EXIT_ALERTS
    return EXIT_OK


def cmd_export_plot(args: argparse.Namespace) -> int:
    series = _load_series(args.input)
    q = series.qber
    band = percentile_level_filter(q, args.window, args.levels)
    res = acf(q, args.max_lag)
    tags = _load_timetags(args.timetags)
    curve = qp_curve(tags.as_array(), args.grid) if tags is not None else None
    for path in export_plot(
        args.output, args.format, series=series, band=band, acf_result=res, curve=curve
    ):
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=50, help="percentile window in points")
    p.add_argument("--levels", type=_levels, default=(25.0, 50.0, 75.0),
                   help="comma-separated percentile levels")
    p.add_argument("--max-lag", type=int, default=20)
    p.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE, help="Q_p threshold grid size")
    p.add_argument("--qber-limit", type=float, default=0.04, help="QBER alarm level (fraction)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsentinel", description="QKD link QBER/SKR diagnostics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="validate telemetry CSV and append it to a history log")
    s.add_argument("-i", "--input", default="-")
    s.add_argument("-o", "--output", required=True, help="history log path")
    s.set_defaults(func=cmd_ingest)

    for name, func, helptext in (
        ("analyze", cmd_analyze, "run diagnostics on telemetry CSV and print the report"),
        ("report", cmd_report, "write report.txt and summary.json into a directory"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("-i", "--input", default="-")
        s.add_argument("-o", "--output", default=None if name == "analyze" else "report")
        s.add_argument("--timetags", default=None, help="optional time-tag file for Q_p")
        s.add_argument("--clock-hz", type=float, default=1e8)
        _analysis_flags(s)
        if name == "analyze":
            s.add_argument("--check", action="store_true", help="exit 3 when alerts are raised")
        s.set_defaults(func=func)

    s = sub.add_parser("qp", help="Q_p curve and Pearson comparison for a time-tag file")
    s.add_argument("-i", "--input", default="-")
    s.add_argument("-o", "--output", default=None, help="directory for qp.csv")
    s.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE)
    s.set_defaults(func=cmd_qp)

    d = LinkProfile()
    s = sub.add_parser("simulate", help="emit synthetic telemetry or time tags")
    s.add_argument("--kind", choices=("telemetry", "timetags"), default="telemetry")
    s.add_argument("-o", "--output", default=None)
    s.add_argument("--n", type=int, default=520)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ar", type=float, default=None,
                   help=f"AR(1) coefficient (telemetry default {d.ar_coefficient}, time tags 0)")
    s.add_argument("--qber-mean", type=float, default=d.qber_mean)
    s.add_argument("--amplitude", type=float, default=d.qber_amplitude)
    s.add_argument("--noise-std", type=float, default=d.noise_std)
    s.add_argument("--interval", type=float, default=d.sample_interval_s)
    s.add_argument("--skr-base", type=float, default=d.skr_base_bps)
    s.add_argument("--rate", type=float, default=1.0, help="time-tag rate in Hz")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("watch", help="poll a history log and stream alerts as JSON lines")
    s.add_argument("-i", "--input", required=True, help="history log path")
    s.add_argument("-o", "--output", default=None, help="alert stream file (default stdout)")
    s.add_argument("--poll-seconds", type=float, default=5.0)
    s.add_argument("--max-polls", type=int, default=None)
    s.add_argument("--window", type=int, default=50)
    s.add_argument("--qber-limit", type=float, default=0.04)
    s.add_argument("--check", action="store_true")
    s.set_defaults(func=cmd_watch)

    s = sub.add_parser("export-plot", help="write plot-ready CSV or SVG for bands, ACF and Q_p")
    s.add_argument("-i", "--input", default="-")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--timetags", default=None)
    s.add_argument("--format", choices=("csv", "svg"), default="csv")
    _analysis_flags(s)
    s.set_defaults(func=cmd_export_plot)
    return p


def _setup_logging() -> None:
    level = os.environ.get("QSENTINEL_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
