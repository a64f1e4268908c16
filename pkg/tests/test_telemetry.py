from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsentinel._format import fmt
from qsentinel.errors import DataError
from qsentinel.simulator import LinkProfile, simulate_qber, simulate_timetags
from qsentinel.telemetry import (
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

HEADER = "timestamp,qber,skr_bps\n"


def test_parse_single_row():
    s = parse_telemetry_csv(HEADER + "0,0.02,12\n")
    assert len(s) == 1
    assert s.records[0] == TelemetryRecord(0.0, 0.02, 12.0)


def test_parse_optional_loss_column():
    s = parse_telemetry_csv("timestamp,qber,skr_bps,loss_db\n0,0.02,12,37\n1,0.03,11,\n")
    assert s.records[0].loss_db == 37.0
    assert s.records[1].loss_db is None


def test_header_only_is_empty_series():
    with pytest.raises(DataError, match="empty series"):
        parse_telemetry_csv(HEADER)


def test_tied_timestamps_name_line_3():
    with pytest.raises(DataError, match="line 3") as exc:
        parse_telemetry_csv(HEADER + "10,0.02,12\n10,0.02,12\n")
    assert "record 1" in str(exc.value) and "record 0" in str(exc.value)


@pytest.mark.parametrize(
    "body, line",
    [
        ("0,0.02\n", 2),
        ("0,0.02,12,5\n", 2),
        ("0,0.02,12\n1,abc,12\n", 3),
        ("0,1.5,12\n", 2),
        ("0,-0.1,12\n", 2),
        ("0,0.02,-1\n", 2),
        ("0,nan,12\n", 2),
    ],
)
def test_malformed_rows_name_line(body, line):
    with pytest.raises(DataError, match=f"line {line}"):
        parse_telemetry_csv(HEADER + body)


def test_bad_header():
    with pytest.raises(DataError, match="line 1"):
        parse_telemetry_csv("time,qber,skr\n0,0.02,12\n")


def test_trailing_blank_line_ignored():
    assert len(parse_telemetry_csv(HEADER + "0,0.02,12\n\n")) == 1


def test_write_one_record_is_two_lines():
    s = TelemetrySeries((TelemetryRecord(0, 0.02, 12),))
    assert write_telemetry_csv(s) == "timestamp,qber,skr_bps\n0,0.02,12\n"


def test_simulated_520_writes_521_lines():
    text = write_telemetry_csv(simulate_qber(LinkProfile(seed=3), 520))
    assert text.count("\n") == 521
    assert "\r" not in text


def test_epoch_timestamps_keep_sub_second_resolution():
    s = TelemetrySeries((TelemetryRecord(1_700_000_000.25, 0.02, 12), TelemetryRecord(1_700_000_000.5, 0.02, 12)))
    assert parse_telemetry_csv(write_telemetry_csv(s)) == s


record_values = st.tuples(
    st.floats(0, 1),
    st.floats(0, 1e6),
    st.one_of(st.none(), st.floats(0, 100)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(record_values, min_size=1, max_size=30), st.floats(0, 1e9))
def test_write_is_idempotent_after_one_pass(rows, t0):
    # arbitrary floats lose digits on the first write; after that the text is stable
    s = TelemetrySeries(tuple(TelemetryRecord(t0 + i, q, k, l) for i, (q, k, l) in enumerate(rows)))
    once = write_telemetry_csv(s)
    assert write_telemetry_csv(parse_telemetry_csv(once)) == once


@settings(max_examples=60, deadline=None)
@given(st.lists(record_values, min_size=1, max_size=30))
def test_roundtrip_on_rendered_values(rows):
    recs = tuple(
        TelemetryRecord(float(i), float(fmt(q)), float(fmt(k)), None if l is None else float(fmt(l)))
        for i, (q, k, l) in enumerate(rows)
    )
    s = TelemetrySeries(recs, "x")
    assert parse_telemetry_csv(write_telemetry_csv(s), "x") == s


def test_series_rejects_non_increasing():
    with pytest.raises(DataError):
        TelemetrySeries((TelemetryRecord(5, 0.02, 12), TelemetryRecord(4, 0.02, 12)))


# --- time tags -------------------------------------------------------------------

def test_parse_timetags():
    assert parse_timetags("0.5\n0.7\n").values == (0.5, 0.7)


@pytest.mark.parametrize("text", ["-1.0\n", "0\n", "0.5\nfoo\n"])
def test_parse_timetags_rejects(text):
    with pytest.raises(DataError, match="line"):
        parse_timetags(text)


def test_timetag_file_from_simulator():
    tags = simulate_timetags(1.0, 10_000, 0.3, seed=2)
    back = parse_timetags(write_timetags(tags))
    assert len(back) == 10_000
    assert all(v > 0 for v in back.values)


def test_timetag_series_validates():
    with pytest.raises(DataError):
        TimeTagSeries((1.0, -2.0))


# --- history log -------------------------------------------------------------------

def test_append_to_empty_log(tmp_path):
    log = tmp_path / "h.csv"
    append_history(TelemetryRecord(0, 0.02, 12), log)
    assert log.read_text() == "timestamp,qber,skr_bps,loss_db\n0,0.02,12,\n"


def test_append_twice_keeps_order(tmp_path):
    log = tmp_path / "h.csv"
    append_history(TelemetryRecord(0, 0.02, 12), log)
    before = log.read_bytes()
    append_history(TelemetryRecord(1, 0.03, 11, 37.0), log)
    assert log.read_bytes().startswith(before)
    s = read_history(log)
    assert [r.timestamp for r in s.records] == [0.0, 1.0]
    assert s.records[1].loss_db == 37.0


def test_520_appends_replay(tmp_path):
    log = tmp_path / "h.csv"
    series = simulate_qber(LinkProfile(seed=5), 520)
    for rec in series.records:
        append_history(rec, log)
    replay = read_history(log)
    assert len(replay) == 520
    # values were rendered to 9 significant digits on the way out
    assert [float(fmt(r.qber)) for r in series.records] == [r.qber for r in replay.records]
    assert [r.timestamp for r in series.records] == [r.timestamp for r in replay.records]


def test_invalid_record_writes_nothing(tmp_path):
    log = tmp_path / "h.csv"
    append_history(TelemetryRecord(5, 0.02, 12), log)
    before = log.read_bytes()
    with pytest.raises(DataError):
        append_history(TelemetryRecord(5, 0.02, 12), log)
    with pytest.raises(DataError):
        append_history("not a record", log)
    assert log.read_bytes() == before


def test_unwritable_log_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        append_history(TelemetryRecord(0, 0.02, 12), tmp_path / "missing-dir" / "h.csv")


def test_partial_tail_is_skipped_then_dropped(tmp_path):
    log = tmp_path / "h.csv"
    for i in range(5):
        append_history(TelemetryRecord(i, 0.02, 12), log)
    data = log.read_bytes()
    log.write_bytes(data[:-4])  # crash in the middle of the last row
    assert len(read_history(log)) == 4
    append_history(TelemetryRecord(10, 0.02, 12), log)
    s = read_history(log)
    assert [r.timestamp for r in s.records] == [0, 1, 2, 3, 10]


def test_history_tail_polls_incrementally(tmp_path):
    log = tmp_path / "h.csv"
    tail = HistoryTail(log)
    assert tail.poll() == []
    append_history(TelemetryRecord(0, 0.02, 12), log)
    append_history(TelemetryRecord(1, 0.02, 12), log)
    assert [r.timestamp for r in tail.poll()] == [0, 1]
    assert tail.poll() == []
    with open(log, "a") as fh:
        fh.write("2,0.0")  # writer mid-row
    assert tail.poll() == []
    with open(log, "a") as fh:
        fh.write("3,11,\n")
    assert [(r.timestamp, r.qber) for r in tail.poll()] == [(2.0, 0.03)]
