"""Tests for report documents, merging and emission."""

import json
import logging
from pathlib import Path

import pytest

from modular_debias.exceptions import InputFileError, ReportError
from modular_debias.report import (
    REPORT_NAME,
    BiasReport,
    merge_into_report,
    parse_records,
    read_report,
    report_emit,
    write_report,
)

# (run, rho, gender, race, religion, reported psi_average) from the published results table
PUBLISHED_ROWS = (
    ("BERT", 0.78, 0.18, 0.09, 0.07, 0.69),
    ("BERT+DA", 0.75, 0.15, 0.02, 0.12, 0.67),
    ("gender", 0.66, 0.09, 0.10, 0.09, 0.60),
    ("race", 0.46, 0.09, 0.06, 0.19, 0.41),
    ("religion", 0.45, 0.19, 0.09, 0.06, 0.40),
    ("profession", 0.45, 0.15, 0.11, 0.12, 0.39),
    ("all", 0.71, 0.15, 0.10, 0.07, 0.63),
    ("fusion", 0.84, 0.12, 0.06, 0.05, 0.77),
)


def _published(row: tuple[str, float, float, float, float, float]) -> BiasReport:
    run, rho, gender, race, religion, psi_average = row
    return BiasReport(
        run=run,
        rho=rho,
        delta={"gender": gender, "race": race, "religion": religion},
        psi_average=psi_average,
    )


class TestBiasReport:
    """Test cases for the report document."""

    @pytest.mark.parametrize("row", PUBLISHED_ROWS, ids=lambda row: row[0])
    def test_published_psi_consistent(
        self, row: tuple[str, float, float, float, float, float]
    ) -> None:
        """Test that every published row passes the psi cross-check."""
        assert _published(row).psi_mismatches() == []

    def test_mismatch_reported(self) -> None:
        """Test that a stored psi far from its recomputation is listed."""
        report = BiasReport(run="x", rho=0.8, delta={"gender": 0.1}, psi={"gender": 0.5})
        problems = report.psi_mismatches()
        assert len(problems) == 1
        assert problems[0].startswith("psi[gender]")

    def test_psi_without_delta(self) -> None:
        """Test that a psi entry needs its delta."""
        report = BiasReport(run="x", rho=0.8, psi={"race": 0.7})
        assert report.psi_mismatches() == ["psi[race] has no delta"]

    def test_update_psi(self) -> None:
        """Test recomputing psi from rho, delta and alpha."""
        report = BiasReport(run="x", rho=0.8, delta={"gender": 0.1, "race": 0.3}, alpha=0.5)
        report.update_psi()
        assert report.psi["gender"] == pytest.approx(0.8 * 0.5 * 0.9)
        assert report.psi_average == pytest.approx(0.8 * 0.5 * 0.8)

    def test_update_psi_needs_rho(self) -> None:
        """Test that psi stays unset without rho."""
        report = BiasReport(run="x", delta={"gender": 0.1})
        report.update_psi()
        assert report.psi == {}
        assert report.psi_average is None

    def test_from_dict_unknown_field(self) -> None:
        """Test that unknown fields are rejected."""
        with pytest.raises(ReportError, match="Invalid report document"):
            BiasReport.from_dict({"run": "x", "accuracy": 0.9})

    def test_to_dict_adds_average(self) -> None:
        """Test that the derived delta average is serialized and ignored on load."""
        report = _published(PUBLISHED_ROWS[0])
        data = report.to_dict()
        assert data["delta_average"] == pytest.approx((0.18 + 0.09 + 0.07) / 3)
        assert BiasReport.from_dict(data) == report


class TestReportFiles:
    """Test cases for reading, writing and merging report files."""

    def test_write_read(self, tmp_path: Path) -> None:
        """Test that a written report reads back unchanged."""
        report = _published(PUBLISHED_ROWS[-1])
        path = tmp_path / REPORT_NAME
        write_report(path, report)
        assert read_report(path) == report

    def test_read_missing(self, tmp_path: Path) -> None:
        """Test that a missing report names its path."""
        with pytest.raises(InputFileError):
            read_report(tmp_path / REPORT_NAME)

    def test_read_invalid_json(self, tmp_path: Path) -> None:
        """Test that a broken report is a report error."""
        path = tmp_path / REPORT_NAME
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ReportError, match="not valid JSON"):
            read_report(path)

    def test_merge_creates_and_recomputes(self, tmp_path: Path) -> None:
        """Test that merging creates the report and keeps psi in step."""
        run_dir = tmp_path / "fusion"
        merge_into_report(run_dir, rho=0.84)
        assert read_report(run_dir / REPORT_NAME).psi_average is None

        merge_into_report(run_dir, delta={"gender": 0.12, "race": 0.06})
        report = merge_into_report(run_dir, delta={"religion": 0.05})

        assert report.run == "fusion"
        assert set(report.delta) == {"gender", "race", "religion"}
        assert report.psi_average == pytest.approx(0.84 * (1 - 0.23 / 3))
        assert read_report(run_dir / REPORT_NAME) == report

    def test_merge_keeps_other_fields(self, tmp_path: Path) -> None:
        """Test that unrelated results survive a merge."""
        stereoset = {"ss": 60.28, "lm_score": 84.17, "icat": 66.87}
        merge_into_report(tmp_path, stereoset=stereoset)
        report = merge_into_report(tmp_path, rho=0.5)
        assert report.stereoset == stereoset

    def test_merge_unknown_field(self, tmp_path: Path) -> None:
        """Test that merging an unknown field fails and writes nothing."""
        with pytest.raises(ReportError, match="accuracy"):
            merge_into_report(tmp_path, accuracy=0.9)
        with pytest.raises(ReportError, match="schema_version"):
            merge_into_report(tmp_path, schema_version=2)
        assert not (tmp_path / REPORT_NAME).exists()


class TestReportEmit:
    """Test cases for rendering reports."""

    @pytest.fixture
    def reports(self) -> list[BiasReport]:
        """The published rows as reports."""
        return [_published(row) for row in PUBLISHED_ROWS]

    def test_table_rows(self, reports: list[BiasReport]) -> None:
        """Test the two-decimal table cells of the baseline row."""
        lines = report_emit(reports).splitlines()
        assert lines[0].split()[:2] == ["run", "rho"]
        bert = next(line for line in lines if line.startswith("BERT "))
        assert bert.split() == ["BERT", "0.78", "0.18", "0.09", "0.07", "0.11", "0.69"]

    def test_half_up_rounding(self) -> None:
        """Test that cells round half away from zero."""
        report = BiasReport(run="r", rho=0.125, delta={"gender": 0.135})
        row = report_emit([report]).splitlines()[2].split()
        assert row[:3] == ["r", "0.13", "0.14"]

    def test_missing_cells(self) -> None:
        """Test that absent metrics render as a dash."""
        row = report_emit([BiasReport(run="empty")]).splitlines()[2].split()
        assert row == ["empty"] + ["-"] * 6

    def test_intrinsic_section(self, reports: list[BiasReport]) -> None:
        """Test that the intrinsic table appears only when there are intrinsic results."""
        assert "stereoset_ss" not in report_emit(reports)
        reports[0].stereoset = {"ss": 60.28, "lm_score": 84.17}
        reports[0].crows = {"ss": 57.25}
        text = report_emit(reports)
        assert "stereoset_ss" in text
        assert "60.28" in text
        assert "57.25" in text

    def test_jigsaw_section(self) -> None:
        """Test the subgroup, mean and overall rows."""
        sub = {"subgroup": "female", "subgroup_auc": 0.9, "bpsn_auc": 0.8, "bnsp_auc": 0.85}
        jigsaw = {
            "submetrics": [sub],
            "means": {"subgroup_auc": 0.9, "bpsn_auc": 0.8, "bnsp_auc": 0.85},
            "power": -5.0,
            "overall_auc": 0.95,
            "overall": 0.875,
        }
        lines = report_emit([BiasReport(run="j", jigsaw=jigsaw)]).splitlines()
        assert any(line.split() == ["j", "female", "0.90", "0.80", "0.85"] for line in lines)
        assert any("M_p (p=-5)" in line for line in lines)
        assert any(line.split() == ["j", "overall", "0.88", "-", "-"] for line in lines)

    def test_records_round_trip(self, reports: list[BiasReport]) -> None:
        """Test that records keep full precision."""
        text = report_emit(reports, "records")
        assert len(text.splitlines()) == len(reports)
        assert json.loads(text.splitlines()[0])["delta_average"] == pytest.approx(0.34 / 3)
        assert parse_records(text) == reports

    def test_mismatch_warning(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test that psi mismatches are logged, not fatal."""
        report = BiasReport(run="bad", rho=0.8, delta={"gender": 0.1}, psi_average=0.5)
        with caplog.at_level(logging.WARNING, logger="modular_debias.report"):
            report_emit([report])
        assert "bad" in caplog.text
        assert "psi_average" in caplog.text

    def test_empty(self) -> None:
        """Test that there must be something to emit."""
        with pytest.raises(ReportError, match="No reports"):
            report_emit([])

    def test_schema_mismatch(self) -> None:
        """Test that reports of another schema version are refused."""
        with pytest.raises(ReportError, match="schema"):
            report_emit([BiasReport(run="old", schema_version=0)])

    def test_unknown_format(self) -> None:
        """Test the format check."""
        with pytest.raises(ReportError, match="yaml"):
            report_emit([BiasReport(run="x")], "yaml")  # type: ignore[arg-type]

    def test_parse_records_bad_line(self) -> None:
        """Test that a malformed record names its line."""
        with pytest.raises(ReportError, match="line 2"):
            parse_records('{"run": "a"}\n{oops\n')
