"""
Link telemetry and raw-key time-tag data model, text formats and history log.

Telemetry CSV::

    timestamp,qber,skr_bps[,loss_db]
    0,0.02,12
    330,0.021,11.9

QBER is always a fraction in [0, 1]. Time-tag files hold one positive
decimal per line.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from ._format import fmt, fmt_timestamp
from .errors import DataError

BASE_COLUMNS = ("timestamp", "qber", "skr_bps")
LOSS_COLUMN = "loss_db"

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TelemetryRecord:
    timestamp: float
    qber: float
    skr_bps: float
    loss_db: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("timestamp", "qber", "skr_bps"):
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.timestamp < 0:
            raise DataError(f"timestamp must be non-negative, got {self.timestamp!r}")
        if not 0.0 <= self.qber <= 1.0:
            raise DataError(f"qber must be a fraction in [0, 1], got {self.qber!r}")
        if self.skr_bps < 0:
            raise DataError(f"skr_bps must be non-negative, got {self.skr_bps!r}")
        if self.loss_db is not None and not (math.isfinite(self.loss_db) and self.loss_db >= 0):
            raise DataError(f"loss_db must be absent or >= 0, got {self.loss_db!r}")


def _check_increasing(records: Sequence[TelemetryRecord], first_line: int | None = None) -> None:
    for i in range(1, len(records)):
        if not records[i].timestamp > records[i - 1].timestamp:
            where = f"line {first_line + i}: " if first_line is not None else ""
            raise DataError(
                f"{where}non-increasing timestamp at record {i} "
                f"({records[i].timestamp!r}) after record {i - 1} ({records[i - 1].timestamp!r})"
            )


@dataclass(frozen=True)
class TelemetrySeries:
    """Time-ordered telemetry from one link. Immutable once constructed."""

    records: tuple[TelemetryRecord, ...]
    link_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        _check_increasing(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.records], dtype=float)

    @property
    def qber(self) -> np.ndarray:
        return np.array([r.qber for r in self.records], dtype=float)

    @property
    def skr(self) -> np.ndarray:
        return np.array([r.skr_bps for r in self.records], dtype=float)

    @property
    def loss(self) -> np.ndarray:
        """Loss values in dB; NaN where the record carries none."""
        return np.array(
            [np.nan if r.loss_db is None else r.loss_db for r in self.records], dtype=float
        )

    def require_nonempty(self) -> None:
        if not self.records:
            raise DataError("empty series")

    def extended(self, new_records: Iterable[TelemetryRecord]) -> "TelemetrySeries":
        return TelemetrySeries(self.records + tuple(new_records), self.link_id)

    def head(self, n: int) -> "TelemetrySeries":
        return TelemetrySeries(self.records[:n], self.link_id)


@dataclass(frozen=True)
class TimeTagSeries:
    """Raw-key time-tag differences y_k, in seconds."""

    values: tuple[float, ...]
    source_id: str = ""
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        for i, v in enumerate(values):
            if not (math.isfinite(v) and v > 0):
                raise DataError(f"time tag {i} must be a positive finite number, got {v!r}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_array", np.array(values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return self._array.copy()


# --- telemetry CSV ---------------------------------------------------------

def _parse_float(token: str, column: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric {column} {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: {column} must be finite, got {token!r}")
    return value


def _parse_header(line: str) -> bool:
    """Return True when the header carries the optional loss column."""
    cols = tuple(c.strip() for c in line.split(","))
    if cols == BASE_COLUMNS:
        return False
    if cols == BASE_COLUMNS + (LOSS_COLUMN,):
        return True
    raise DataError(
        f"line 1: expected header 'timestamp,qber,skr_bps[,loss_db]', got {line.strip()!r}"
    )


def _parse_row(row: list[str], has_loss: bool, lineno: int) -> TelemetryRecord:
    width = 4 if has_loss else 3
    if len(row) != width:
        raise DataError(f"line {lineno}: expected {width} columns, got {len(row)}")
    ts = _parse_float(row[0], "timestamp", lineno)
    qber = _parse_float(row[1], "qber", lineno)
    skr = _parse_float(row[2], "skr_bps", lineno)
    loss = None
    if has_loss and row[3].strip() != "":
        loss = _parse_float(row[3], "loss_db", lineno)
    try:
        return TelemetryRecord(ts, qber, skr, loss)
    except DataError as exc:
        raise DataError(f"line {lineno}: {exc}") from None


def _parse_lines(lines: list[str], *, allow_empty: bool) -> list[TelemetryRecord]:
    if not lines or not lines[0].strip():
        raise DataError("line 1: missing header")
    has_loss = _parse_header(lines[0])
    records: list[TelemetryRecord] = []
    body = lines[1:]
    # tolerate trailing blank lines only
    while body and not body[-1].strip():
        body.pop()
    for offset, row in enumerate(csv.reader(body)):
        lineno = offset + 2
        records.append(_parse_row(row, has_loss, lineno))
        if len(records) > 1 and not records[-1].timestamp > records[-2].timestamp:
            i = len(records) - 1
            raise DataError(
                f"line {lineno}: non-increasing timestamp at record {i} "
                f"({records[i].timestamp!r}) after record {i - 1} ({records[i - 1].timestamp!r})"
            )
    if not records and not allow_empty:
        raise DataError("empty series")
    return records


def parse_telemetry_csv(text: str, link_id: str = "") -> TelemetrySeries:
    """Parse headered telemetry CSV. Raises DataError naming the offending line."""
    lines = text.splitlines()
    return TelemetrySeries(tuple(_parse_lines(lines, allow_empty=False)), link_id)


def _has_loss(records: Sequence[TelemetryRecord]) -> bool:
    return any(r.loss_db is not None for r in records)


def _header(has_loss: bool) -> str:
    cols = BASE_COLUMNS + ((LOSS_COLUMN,) if has_loss else ())
    return ",".join(cols)


def _format_row(record: TelemetryRecord, has_loss: bool) -> str:
    fields = [fmt_timestamp(record.timestamp), fmt(record.qber), fmt(record.skr_bps)]
    if has_loss:
        fields.append("" if record.loss_db is None else fmt(record.loss_db))
    return ",".join(fields)


def write_telemetry_csv(series: TelemetrySeries) -> str:
    has_loss = _has_loss(series.records)
    lines = [_header(has_loss)]
    lines.extend(_format_row(r, has_loss) for r in series.records)
    return "\n".join(lines) + "\n"


# --- time tags ---------------------------------------------------------------

def parse_timetags(text: str, source_id: str = "") -> TimeTagSeries:
    values: list[float] = []
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        try:
            v = float(token)
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric time tag {token!r}") from None
        if not (math.isfinite(v) and v > 0):
            raise DataError(f"line {lineno}: time tag must be positive and finite, got {token!r}")
        values.append(v)
    return TimeTagSeries(tuple(values), source_id)


def write_timetags(series: TimeTagSeries) -> str:
    return "".join(fmt(v) + "\n" for v in series.values)


# --- append-only history log -----------------------------------------------

def _last_complete_line(path: Path) -> Optional[str]:
    """Last newline-terminated line of ``path`` (skipping a partial tail), or None."""
    with open(path, "rb") as fh:
        fh.seek(0, os.SEEK_END)
        end = fh.tell()
        chunk = b""
        pos = end
        while pos > 0:
            step = min(4096, pos)
            pos -= step
            fh.seek(pos)
            chunk = fh.read(step) + chunk
            if chunk.count(b"\n") >= 2 or pos == 0:
                break
    text = chunk.decode("utf-8", errors="replace")
    cut = text.rfind("\n")
    if cut < 0:
        return None
    complete = text[:cut]
    return complete.rsplit("\n", 1)[-1]


def _drop_partial_tail(fh) -> None:
    """Truncate an unterminated final row left behind by a crashed writer."""
    end = fh.tell()
    pos = end
    while pos > 0:
        step = min(4096, pos)
        fh.seek(pos - step)
        chunk = fh.read(step)
        cut = chunk.rfind(b"\n")
        if cut >= 0:
            keep = pos - step + cut + 1
            break
        pos -= step
    else:
        keep = 0
    if keep != end:
        log.warning("dropping %d-byte partial row at end of history log", end - keep)
        fh.truncate(keep)
    fh.seek(keep)


def append_history(record: TelemetryRecord, log: str | os.PathLike) -> int:
    """
    Append one record to a history log, writing the header first if the log is new.

    The record must be newer than the last complete row already in the log.
    Returns the number of bytes written. The loss column is always present
    in history logs so that rows with and without loss can coexist.
    """
    if not isinstance(record, TelemetryRecord):
        raise DataError(f"expected TelemetryRecord, got {type(record).__name__}")
    path = Path(log)
    exists = path.exists() and path.stat().st_size > 0
    if exists:
        last = _last_complete_line(path)
        if last is not None and not last.startswith(BASE_COLUMNS[0]):
            prev = _parse_float(last.split(",")[0], "timestamp", 0)
            if not record.timestamp > prev:
                raise DataError(
                    f"non-increasing timestamp {record.timestamp!r} after last logged {prev!r}"
                )
    payload = ""
    if not exists:
        payload += _header(True) + "\n"
    payload += _format_row(record, True) + "\n"
    data = payload.encode("utf-8")
    with open(path, "r+b" if exists else "wb") as fh:
        fh.seek(0, os.SEEK_END)
        if exists:
            _drop_partial_tail(fh)
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    return len(data)


def read_history(log: str | os.PathLike, link_id: str = "") -> TelemetrySeries:
    """Read a whole history log, ignoring a partial (unterminated) final line."""
    text = Path(log).read_text(encoding="utf-8")
    lines = text.split("\n")
    # the last element is either "" (file ended with \n) or a partial row
    complete = lines[:-1]
    if not any(ln.strip() for ln in complete):
        return TelemetrySeries((), link_id)
    return TelemetrySeries(tuple(_parse_lines(complete, allow_empty=True)), link_id)


class HistoryTail:
    """
    Incremental reader for a history log written by a single appender.

    Each ``poll`` returns the complete rows added since the previous poll. A
    partial final line is left in place and picked up on a later poll.
    """

    def __init__(self, log: str | os.PathLike):
        self.path = Path(log)
        self._offset = 0
        self._has_loss: Optional[bool] = None
        self._lineno = 0

    def poll(self) -> list[TelemetryRecord]:
        if not self.path.exists():
            return []
        with open(self.path, "rb") as fh:
            fh.seek(self._offset)
            chunk = fh.read()
        cut = chunk.rfind(b"\n")
        if cut < 0:
            return []
        self._offset += cut + 1
        out: list[TelemetryRecord] = []
        for raw in chunk[: cut + 1].decode("utf-8").split("\n")[:-1]:
            self._lineno += 1
            if not raw.strip():
                continue
            if self._has_loss is None:
                self._has_loss = _parse_header(raw)
                continue
            row = next(csv.reader([raw]))
            out.append(_parse_row(row, self._has_loss, self._lineno))
        return out
