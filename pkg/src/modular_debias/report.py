"""BiasReport documents: merging evaluation results, Ψ cross-checks and emission."""

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .artifacts import dumps_json, write_text_atomic
from .bias_metrics import round_half_up, useful_fairness
from .exceptions import InputFileError, ReportError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPORT_NAME = "report.json"
PSI_TOLERANCE = 0.01
TABLE_DIMENSIONS = ("gender", "race", "religion")
MISSING = "-"

ReportFormat = Literal["table", "records"]


@dataclass
class BiasReport:
    """Metrics of one run plus a reference to its run manifest."""

    run: str
    rho: float | None = None
    delta: dict[str, float] = field(default_factory=dict)
    alpha: float = 1.0
    psi: dict[str, float] = field(default_factory=dict)
    psi_average: float | None = None
    stereoset: dict[str, Any] | None = None
    crows: dict[str, Any] | None = None
    jigsaw: dict[str, Any] | None = None
    manifest: str | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def delta_average(self) -> float | None:
        """Arithmetic mean of the per-dimension deltas."""
        if not self.delta:
            return None
        return float(np.mean(list(self.delta.values())))

    def update_psi(self) -> None:
        """Recompute per-dimension and average Ψ from ρ, the deltas and α."""
        if self.rho is None or not self.delta:
            return
        self.psi = {
            dim: useful_fairness(self.rho, value, self.alpha) for dim, value in self.delta.items()
        }
        average = self.delta_average
        if average is not None:
            self.psi_average = useful_fairness(self.rho, average, self.alpha)

    def psi_mismatches(self, tolerance: float = PSI_TOLERANCE) -> list[str]:
        """Stored Ψ values that differ from their recomputation by more than tolerance."""
        if self.rho is None:
            return []
        problems = []
        for dim, stored in self.psi.items():
            if dim not in self.delta:
                problems.append(f"psi[{dim}] has no delta")
                continue
            expected = useful_fairness(self.rho, self.delta[dim], self.alpha)
            if abs(expected - stored) > tolerance:
                problems.append(f"psi[{dim}] = {stored:.4f}, recomputed {expected:.4f}")
        average = self.delta_average
        if self.psi_average is not None and average is not None:
            expected = useful_fairness(self.rho, average, self.alpha)
            if abs(expected - self.psi_average) > tolerance:
                problems.append(f"psi_average = {self.psi_average:.4f}, recomputed {expected:.4f}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        """Serialize, adding the derived delta average."""
        return {**asdict(self), "delta_average": self.delta_average}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BiasReport":
        """Restore from :meth:`to_dict` output.

        Raises:
            ReportError: On unknown fields or a missing run name

        """
        fields = {k: v for k, v in data.items() if k != "delta_average"}
        try:
            return cls(**fields)
        except TypeError as e:
            msg = f"Invalid report document: {e}"
            raise ReportError(msg) from e


def read_report(path: Path) -> BiasReport:
    """Read a report document.

    Raises:
        InputFileError: If the file does not exist
        ReportError: If it is not a valid report

    """
    if not path.is_file():
        raise InputFileError(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        msg = f"Report {path} is not valid JSON: {e}"
        raise ReportError(msg) from e
    return BiasReport.from_dict(data)


def write_report(path: Path, report: BiasReport) -> None:
    """Write a report document atomically."""
    write_text_atomic(path, dumps_json(report.to_dict()))


def merge_into_report(run_dir: Path, **updates: Any) -> BiasReport:  # noqa: ANN401
    """Update fields of ``<run_dir>/report.json``, creating it if needed.

    Ψ is recomputed whenever ρ, the deltas or α change.

    Raises:
        ReportError: On an unknown field

    """
    path = run_dir / REPORT_NAME
    report = read_report(path) if path.is_file() else BiasReport(run=run_dir.name)
    for name, value in updates.items():
        if not hasattr(report, name) or name == "schema_version":
            msg = f"Unknown report field {name!r}"
            raise ReportError(msg)
        if name == "delta":
            report.delta = {**report.delta, **value}
        else:
            setattr(report, name, value)
    if {"rho", "delta", "alpha"} & set(updates):
        report.update_psi()
    write_report(path, report)
    logger.info("Updated %s (%s)", path, ", ".join(sorted(updates)))
    return report


def _cell(value: float | None) -> str:
    return MISSING if value is None else f"{round_half_up(value):.2f}"


def _render(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max([len(h), *(len(r[i]) for r in rows)]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths, strict=True)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(
        "  ".join(c.ljust(w) for c, w in zip(row, widths, strict=True)).rstrip() for row in rows
    )
    return lines


def _sts_table(reports: Sequence[BiasReport]) -> list[str]:
    deltas = [f"delta_{d}" for d in TABLE_DIMENSIONS]
    header = ["run", "rho", *deltas, "delta_average", "psi_average"]
    rows = [
        [
            r.run,
            _cell(r.rho),
            *(_cell(r.delta.get(d)) for d in TABLE_DIMENSIONS),
            _cell(r.delta_average),
            _cell(r.psi_average),
        ]
        for r in reports
    ]
    return _render(header, rows)


def _intrinsic_table(reports: Sequence[BiasReport]) -> list[str]:
    rows = [
        [
            r.run,
            _cell(r.stereoset["ss"] if r.stereoset else None),
            _cell(r.stereoset["lm_score"] if r.stereoset else None),
            _cell(r.crows["ss"] if r.crows else None),
        ]
        for r in reports
        if r.stereoset or r.crows
    ]
    return _render(["run", "stereoset_ss", "lm_score", "crows_ss"], rows) if rows else []


def _jigsaw_table(reports: Sequence[BiasReport]) -> list[str]:
    rows = []
    for r in reports:
        if not r.jigsaw:
            continue
        for sub in r.jigsaw["submetrics"]:
            rows.append(
                [
                    r.run,
                    sub["subgroup"],
                    _cell(sub["subgroup_auc"]),
                    _cell(sub["bpsn_auc"]),
                    _cell(sub["bnsp_auc"]),
                ]
            )
        means = r.jigsaw["means"]
        rows.append(
            [
                r.run,
                f"M_p (p={r.jigsaw['power']:g})",
                _cell(means["subgroup_auc"]),
                _cell(means["bpsn_auc"]),
                _cell(means["bnsp_auc"]),
            ]
        )
        rows.append([r.run, "overall_auc", _cell(r.jigsaw["overall_auc"]), MISSING, MISSING])
        rows.append([r.run, "overall", _cell(r.jigsaw["overall"]), MISSING, MISSING])
    header = ["run", "subgroup", "subgroup_auc", "bpsn_auc", "bnsp_auc"]
    return _render(header, rows) if rows else []


def report_emit(reports: Sequence[BiasReport], fmt: ReportFormat = "table") -> str:
    """Render reports as a text table (2-decimal, half-up) or full-precision JSON lines.

    Stored Ψ values are cross-checked against ρ·α·(1-Δ); mismatches beyond
    0.01 are logged as warnings.

    Raises:
        ReportError: If the list is empty, schema versions differ or the format is unknown

    """
    if not reports:
        msg = "No reports to emit"
        raise ReportError(msg)
    versions = {r.schema_version for r in reports}
    if versions != {SCHEMA_VERSION}:
        msg = f"Report schema versions {sorted(versions)} do not match {SCHEMA_VERSION}"
        raise ReportError(msg)
    for report in reports:
        for problem in report.psi_mismatches():
            logger.warning("Run %s: %s", report.run, problem)
    if fmt == "records":
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports)
    if fmt != "table":
        msg = f"Unknown report format {fmt!r}"
        raise ReportError(msg)
    sections = [_sts_table(reports), _intrinsic_table(reports), _jigsaw_table(reports)]
    return "\n\n".join("\n".join(s) for s in sections if s) + "\n"


def parse_records(text: str) -> list[BiasReport]:
    """Parse the records format back into reports.

    Raises:
        ReportError: On a malformed line

    """
    reports = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            reports.append(BiasReport.from_dict(json.loads(line)))
        except json.JSONDecodeError as e:
            msg = f"line {line_number}: {e}"
            raise ReportError(msg) from e
    return reports
