from __future__ import annotations

import io
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from qsentinel.cli import run
from qsentinel.monitor import build_report
from qsentinel.telemetry import parse_telemetry_csv, read_history

HEADER = "timestamp,qber,skr_bps\n"


def telemetry_file(tmp_path, qber, name="link.csv"):
    path = tmp_path / name
    rows = "".join(f"{i * 330},{q},12\n" for i, q in enumerate(qber))
    path.write_text(HEADER + rows)
    return path


def feed_stdin(monkeypatch, text):
    monkeypatch.setattr(sys, "stdin", io.StringIO(text))


# --- exit codes ----------------------------------------------------------------

def test_nominal_analyze_exits_zero(tmp_path, capsys):
    path = telemetry_file(tmp_path, [0.02] * 40)
    assert run(["analyze", "-i", str(path), "--check"]) == 0
    assert "Alerts (0)" in capsys.readouterr().out


def test_breach_with_check_exits_three(tmp_path, capsys):
    path = telemetry_file(tmp_path, [0.02] * 20 + [0.05] + [0.02] * 19)
    assert run(["analyze", "-i", str(path), "--check"]) == 3
    assert "qber_threshold" in capsys.readouterr().out
    assert run(["analyze", "-i", str(path)]) == 0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["analyze", "--window", "x"],
        ["analyze", "--levels", "50,120"],
        ["simulate", "--n", "0"],
        ["analyze", "-i", "/nonexistent/file.csv"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_csv_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text(HEADER + "0,0.02,12\n0,0.02,12\n")
    assert run(["analyze", "-i", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_stdin_is_default_input(monkeypatch, capsys):
    feed_stdin(monkeypatch, HEADER + "".join(f"{i},0.02,12\n" for i in range(30)))
    assert run(["analyze"]) == 0
    assert "30 records" in capsys.readouterr().out


# --- composition ---------------------------------------------------------------

def test_simulate_pipe_analyze_matches_library(monkeypatch, capsys):
    assert run(["simulate", "--n", "520", "--seed", "7"]) == 0
    csv_text = capsys.readouterr().out
    feed_stdin(monkeypatch, csv_text)
    assert run(["analyze"]) == 0
    piped = capsys.readouterr().out
    direct = build_report(parse_telemetry_csv(csv_text)).text
    assert piped == direct


def test_subprocess_pipeline(tmp_path):
    sim = subprocess.run(
        [sys.executable, "-m", "qsentinel.cli", "simulate", "--n", "100", "--seed", "1"],
        capture_output=True, text=True, check=True,
    )
    out = subprocess.run(
        [sys.executable, "-m", "qsentinel.cli", "analyze"],
        input=sim.stdout, capture_output=True, text=True,
    )
    assert out.returncode == 0
    assert out.stdout.startswith("# qsentinel report")


def test_simulate_is_seeded(capsys):
    run(["simulate", "--n", "50", "--seed", "3"])
    a = capsys.readouterr().out
    run(["simulate", "--n", "50", "--seed", "3"])
    assert capsys.readouterr().out == a
    assert a.count("\n") == 51


def test_simulate_timetags(tmp_path):
    out = tmp_path / "tags.txt"
    assert run(["simulate", "--kind", "timetags", "--n", "1000", "--ar", "0.4", "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1000


# --- ingest / report / qp ---------------------------------------------------------

def test_ingest_appends_and_rejects_overlap(tmp_path, capsys):
    src = telemetry_file(tmp_path, [0.02, 0.03, 0.025])
    log = tmp_path / "history.csv"
    assert run(["ingest", "-i", str(src), "-o", str(log)]) == 0
    assert len(read_history(log)) == 3
    before = log.read_bytes()
    assert run(["ingest", "-i", str(src), "-o", str(log)]) == 2
    assert log.read_bytes() == before


def test_report_writes_text_and_summary(tmp_path):
    src = tmp_path / "sim.csv"
    run(["simulate", "--n", "300", "--seed", "2", "-o", str(src)])
    out = tmp_path / "rep"
    assert run(["report", "-i", str(src), "-o", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["reference_table"]) == 7
    assert (out / "report.txt").read_text().startswith("# qsentinel report: sim")


def test_qp_command(tmp_path, capsys):
    tags = tmp_path / "tags.txt"
    run(["simulate", "--kind", "timetags", "--n", "2000", "--ar", "0.5", "--seed", "4", "-o", str(tags)])
    assert run(["qp", "-i", str(tags), "--grid", "51", "-o", str(tmp_path / "qp")]) == 0
    out = capsys.readouterr().out
    assert "min_p Q_p:" in out and "delta:" in out
    assert len((tmp_path / "qp" / "qp.csv").read_text().splitlines()) == 52


# --- watch ----------------------------------------------------------------------

def test_watch_streams_alert_lines(tmp_path):
    log = tmp_path / "history.csv"
    src = telemetry_file(tmp_path, [0.02] * 10 + [0.06] * 4 + [0.02] * 6)
    run(["ingest", "-i", str(src), "-o", str(log)])
    alerts = tmp_path / "alerts.jsonl"
    code = run(["watch", "-i", str(log), "-o", str(alerts), "--max-polls", "1", "--check"])
    assert code == 3
    lines = [json.loads(l) for l in alerts.read_text().splitlines()]
    assert [(a["kind"], a["start_index"], a["end_index"]) for a in lines] == [("qber_threshold", 10, 13)]
    assert lines[0]["severity"] == "critical"


def test_watch_on_missing_log_is_quiet(tmp_path, capsys):
    assert run(["watch", "-i", str(tmp_path / "none.csv"), "--max-polls", "1"]) == 0
    assert capsys.readouterr().out == ""


# --- export-plot -------------------------------------------------------------------

@pytest.fixture
def sim_inputs(tmp_path):
    tel, tags = tmp_path / "sim.csv", tmp_path / "tags.txt"
    run(["simulate", "--n", "520", "--seed", "0", "-o", str(tel)])
    run(["simulate", "--kind", "timetags", "--n", "3000", "--ar", "0.3", "-o", str(tags)])
    return tel, tags


def test_export_csv_shapes(tmp_path, sim_inputs):
    tel, tags = sim_inputs
    out = tmp_path / "plots"
    assert run(["export-plot", "-i", str(tel), "--timetags", str(tags), "-o", str(out), "--grid", "101"]) == 0
    bands = (out / "bands.csv").read_text().splitlines()
    assert bands[0] == "index,timestamp,p25,p50,p75,qber" and len(bands) == 521
    acf_rows = (out / "acf.csv").read_text().splitlines()
    assert acf_rows[0] == "lag,r,band" and len(acf_rows) == 22
    lag, r, band = acf_rows[1].split(",")
    assert (lag, r) == ("0", "1") and float(band) == pytest.approx(1.96 / 520**0.5, rel=1e-8)
    assert len((out / "qp.csv").read_text().splitlines()) == 102


def test_export_is_byte_deterministic(tmp_path, sim_inputs):
    tel, tags = sim_inputs
    for fmt_ in ("csv", "svg"):
        a, b = tmp_path / f"a{fmt_}", tmp_path / f"b{fmt_}"
        for d in (a, b):
            run(["export-plot", "-i", str(tel), "--timetags", str(tags), "-o", str(d), "--format", fmt_])
        for name in ("bands", "acf", "qp"):
            assert (a / f"{name}.{fmt_}").read_bytes() == (b / f"{name}.{fmt_}").read_bytes()


def test_export_svg_is_well_formed(tmp_path, sim_inputs):
    tel, tags = sim_inputs
    out = tmp_path / "svg"
    run(["export-plot", "-i", str(tel), "--timetags", str(tags), "-o", str(out), "--format", "svg"])
    for name in ("bands", "acf", "qp"):
        root = ET.fromstring((out / f"{name}.svg").read_text())
        assert root.get("width") == "800" and root.get("height") == "480"


def test_export_writes_undef_for_undefined_qp(tmp_path):
    tel = telemetry_file(tmp_path, [0.02, 0.03] * 20)
    tags = tmp_path / "alt.txt"
    tags.write_text("1\n2\n" * 50)
    out = tmp_path / "plots"
    assert run(["export-plot", "-i", str(tel), "--timetags", str(tags), "-o", str(out), "--grid", "5"]) == 0
    rows = (out / "qp.csv").read_text().splitlines()[1:]
    # alternating values: every adjacent sign product is -1 or 0, never positive
    assert [r.split(",")[1] for r in rows] == ["undef"] * 5


def test_export_without_timetags_skips_qp(tmp_path, sim_inputs):
    tel, _ = sim_inputs
    out = tmp_path / "plots"
    run(["export-plot", "-i", str(tel), "-o", str(out)])
    assert sorted(p.name for p in out.iterdir()) == ["acf.csv", "bands.csv"]


def test_export_bad_format_is_usage_error(tmp_path, sim_inputs):
    tel, _ = sim_inputs
    assert run(["export-plot", "-i", str(tel), "-o", str(tmp_path / "p"), "--format", "png"]) == 1
