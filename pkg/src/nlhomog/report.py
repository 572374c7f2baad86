"""Scenario reports and their CSV/JSON serialization.

Reports are deliberately timing-free so that two runs with the same
configuration and seed serialize byte-for-byte identically; wall-clock
numbers go to the console instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CSV_HEADER = "n,metric,value,tol,pass"


@dataclass(frozen=True)
class Report:
    """Metric tables plus named pass/fail criteria for one scenario run."""

    scenario: str
    seed: int
    provenance: dict
    tables: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(c["passed"] for c in self.criteria)

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "provenance": self.provenance,
            "tables": self.tables,
            "criteria": self.criteria,
            "all_pass": self.all_pass,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Report":
        return cls(
            scenario=data["scenario"],
            seed=data["seed"],
            provenance=data["provenance"],
            tables=data["tables"],
            criteria=data["criteria"],
        )


def metric_row(metric: str, value: float, n: int | None = None, tol: float | None = None, passed: bool | None = None) -> dict:
    return {
        "n": None if n is None else int(n),
        "metric": metric,
        "value": None if value is None else float(value),
        "tol": None if tol is None else float(tol),
        "pass": None if passed is None else bool(passed),
    }


def criterion_row(name: str, passed: bool, detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _provenance_lines(report: Report) -> list[str]:
    prov = report.provenance
    lines = [
        f"# scenario: {report.scenario}",
        f"# seed: {report.seed}",
        f"# package: {prov.get('package', '')} {prov.get('version', '')}",
        f"# config_sha256: {prov.get('config_sha256', '')}",
    ]
    return lines


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report: Report, fmt: str, out_dir) -> list[Path]:
    """Write the report as a single JSON document or one CSV per table."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []
    if fmt == "json":
        target = out / "report.json"
        blob = json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
        target.write_text(blob, encoding="utf-8")
        written.append(target)
        return written
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    header = _provenance_lines(report)
    for name, rows in sorted(report.tables.items()):
        target = out / f"{name}.csv"
        lines = list(header)
        lines.append(CSV_HEADER)
        for row in rows:
            lines.append(
                ",".join(
                    _csv_cell(row.get(k)) for k in ("n", "metric", "value", "tol", "pass")
                )
            )
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(target)
    target = out / "criteria.csv"
    lines = list(header)
    lines.append("name,passed,detail")
    for crit in report.criteria:
        detail = str(crit.get("detail", "")).replace(",", ";")
        lines.append(f"{crit['name']},{_csv_cell(crit['passed'])},{detail}")
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(target)
    return written
