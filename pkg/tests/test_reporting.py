import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rare_ring.driver import RunConfig, run
from rare_ring.errors import ConfigError
from rare_ring.estimator import ConvergenceHistory, HistoryRow
from rare_ring.reporting import (
    SCHEMA,
    SUMMARY_COLUMNS,
    fmt,
    history_csv_text,
    read_history_csv,
    report_dict,
    summarize,
    validate_report,
    verify_manifest,
    write_history_csv,
    write_report_json,
    write_run,
)


def _row(n=1, psi=0.5, label="failure", p=1e-3, cov=0.1, r=2.0, R=5.0, k=1):
    return HistoryRow(n, psi, label, p, cov, r, R, k)


def _history(*rows):
    h = ConvergenceHistory()
    for row in rows:
        h.append(row)
    return h


@pytest.fixture(scope="module")
def small_run():
    return run(RunConfig(benchmark="wavy_circle", budget=40, seed=1, n_is=2000,
                         n_is_final=10_000, dots_per_seed=300))


@pytest.fixture(scope="module")
def empty_run():
    return run(RunConfig(benchmark="black_swan", budget=5, seed=0))


class TestFormat:
    @pytest.mark.parametrize("v, text", [
        (3, "3"),
        (True, "true"),
        (0.1, "0.1"),
        (1 / 3, "0.333333333333"),
        (2.582e-3, "0.002582"),
        (math.inf, "inf"),
        (-math.inf, "-inf"),
        (math.nan, "nan"),
        ("failure", "failure"),
    ])
    def test_values(self, v, text):
        assert fmt(v) == text

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_twelve_digit_round_trip(self, v):
        back = float(fmt(v))
        assert back == pytest.approx(v, rel=5e-12, abs=0)


class TestHistoryCsv:
    def test_one_row_two_lines(self, tmp_path):
        path = tmp_path / "h.csv"
        write_history_csv(_history(_row()), path)
        data = path.read_bytes()
        assert data.count(b"\n") == 2
        assert b"\r" not in data

    def test_round_trip(self, tmp_path):
        h = _history(_row(1, math.nan, "failure", 0.0, math.inf, math.nan, math.nan, 0),
                     _row(2, 1 / 7, "failure", 2.582e-3, 0.0312, 2.1, 5.4, 3),
                     _row(2, 1 / 7, "label_5", 1e-9, 0.5, 2.1, 5.4, 1))
        path = tmp_path / "h.csv"
        entry = write_history_csv(h, path)
        back = read_history_csv(path)
        assert entry["size"] == path.stat().st_size
        assert history_csv_text(back) == history_csv_text(h)
        for a, b in zip(h, back):
            for name in ("psi", "p_hat", "cov", "r_inner", "r_outer"):
                x, y = getattr(a, name), getattr(b, name)
                assert (math.isnan(x) and math.isnan(y)) or y == pytest.approx(x, rel=1e-11)

    def test_empty_refused(self, tmp_path):
        with pytest.raises(ConfigError):
            write_history_csv(ConvergenceHistory(), tmp_path / "h.csv")

    def test_no_overwrite_without_force(self, tmp_path):
        path = tmp_path / "h.csv"
        write_history_csv(_history(_row()), path)
        with pytest.raises(ConfigError):
            write_history_csv(_history(_row()), path)
        write_history_csv(_history(_row(), _row(2)), path, force=True)
        assert len(read_history_csv(path)) == 2

    def test_run_n_sim_monotone(self, small_run, tmp_path):
        write_history_csv(small_run.history, tmp_path / "h.csv")
        n = [row.n_sim for row in read_history_csv(tmp_path / "h.csv")]
        assert n == sorted(n)


class TestReportJson:
    def test_schema(self, small_run, tmp_path):
        write_report_json(small_run, tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        validate_report(data)
        assert data["schema"] == SCHEMA
        assert data["n_sim"] == small_run.n_sim
        assert data["ed"]["points"][0] == [0.0, 0.0]
        assert data["reference"]["p_ref"] == pytest.approx(2.582e-3)

    def test_empty_sensitivities_present(self, empty_run):
        data = report_dict(empty_run)
        validate_report(data)
        assert data["sensitivities"] == []
        assert data["estimates"] == []
        assert data["termination"] == "budget"

    @pytest.mark.parametrize("key", ["schema", "ed", "history", "termination"])
    def test_validation_rejects_missing(self, small_run, key):
        data = report_dict(small_run)
        del data[key]
        with pytest.raises(ConfigError):
            validate_report(data)

    def test_validation_rejects_schema_version(self, small_run):
        data = report_dict(small_run)
        data["schema"] = "rare-ring/0"
        with pytest.raises(ConfigError):
            validate_report(data)

    def test_strict_json(self, small_run):
        # nan and inf become strings so any JSON reader accepts the file
        text = json.dumps(report_dict(small_run), allow_nan=False)
        assert "NaN" not in text


class TestRunArtifacts:
    @pytest.mark.parametrize("fmt_, files", [
        ("csv", {"history.csv", "ed.csv", "manifest.json"}),
        ("json", {"report.json", "manifest.json"}),
    ])
    def test_manifest(self, small_run, tmp_path, fmt_, files):
        entries = write_run(small_run, tmp_path, fmt_)
        assert {p.name for p in tmp_path.iterdir()} == files
        assert {e["file"] for e in entries} == files - {"manifest.json"}
        assert verify_manifest(tmp_path)

    def test_tamper_detected(self, small_run, tmp_path):
        write_run(small_run, tmp_path, "csv")
        with open(tmp_path / "history.csv", "a") as fh:
            fh.write("x\n")
        assert not verify_manifest(tmp_path)

    def test_rerun_needs_force(self, small_run, tmp_path):
        write_run(small_run, tmp_path, "csv")
        with pytest.raises(ConfigError):
            write_run(small_run, tmp_path, "csv")
        write_run(small_run, tmp_path, "csv", force=True)

    def test_unknown_format(self, small_run, tmp_path):
        with pytest.raises(ConfigError):
            write_run(small_run, tmp_path, "xml")


class TestSummarize:
    def test_single_result_one_row(self, small_run):
        lines = summarize([small_run]).splitlines()
        assert lines[0].split() == list(SUMMARY_COLUMNS)
        assert len(lines) == 2
        name, n, p, cov, ratio = lines[1].split()
        assert name == "wavy_circle"
        assert int(n) == small_run.n_sim
        assert float(p) == pytest.approx(small_run.p_hat, rel=1e-5)
        assert float(ratio) == pytest.approx(small_run.p_hat / 2.582e-3, rel=1e-3)

    def test_groups_and_medians(self, small_run, empty_run):
        lines = summarize([small_run, empty_run, empty_run]).splitlines()
        assert [line.split()[0] for line in lines[1:]] == ["wavy_circle", "black_swan"]
        assert float(lines[2].split()[2]) == 0.0
        assert lines[2].split()[3] == "inf"

    def test_empty(self):
        with pytest.raises(ConfigError):
            summarize([])
