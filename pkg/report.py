"""
Reporting
=========

Text tables, CSV exports and the machine-readable result document written
at the end of a run, and the reader used by the audit-only mode.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd

from milp_design import CostBreakdown, DesignVector, ScheduleSolution
from mopf import ViolationReport
from scenario import Scenario

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)


RESULT_FILE = "result.json"
LEDGER_FILE = "ledger.csv"
TRAJECTORY_FILE = "trajectory.csv"
BREAKDOWN_FILE = "breakdown.txt"
VIOLATIONS_FILE = "violations.csv"
DESIGN_SUMMARY_FILE = "design_summary.txt"

TRAJECTORY_COLUMNS = ["iteration", "lb", "ub", "lub", "cr_termination", "wall_time_s", "elapsed_s"]


class BreakdownMismatchError(ValueError):
    """Raised when a breakdown's rows do not add up to its objective."""


def _amount(value: float) -> str:
    text = f"{value:,.0f}"
    return "0" if text == "-0" else text


def render_breakdown(breakdown: CostBreakdown, tolerance: float = 1e-6) -> str:
    """
    Cost table in the usual row order, incomes shown negative.

    Raises:
        BreakdownMismatchError: If objective and row sum differ by more than
            ``tolerance`` (relative)
    """
    mismatch = breakdown.mismatch()
    if mismatch > tolerance:
        raise BreakdownMismatchError(
            f"objective {breakdown.objective:,.2f} differs from row sum {breakdown.row_sum():,.2f} "
            f"(relative {mismatch:.2e} > {tolerance:.0e})")

    rows = breakdown.rows() + [("Objective value", breakdown.objective)]
    width = max(len(label) for label, _ in rows)
    lines = [f"{'Cost component':<{width}}  {'GBP/yr':>12}", "-" * (width + 14)]
    for label, value in rows:
        if label == "Objective value":
            lines.append("-" * (width + 14))
        lines.append(f"{label:<{width}}  {_amount(value):>12}")
    return "\n".join(lines) + "\n"


def render_design_summary(scenario: Scenario, design: DesignVector, schedule: ScheduleSolution) -> str:
    """One row per dwelling: ASHP-tank pair, battery, boiler and PV area."""
    panel_area = scenario.tariffs.panel_area
    rows = []
    for d in scenario.dwellings:
        pair = design.ashp_tank(d.id)
        area = schedule.pv_area.get(d.id, 0.0)
        rows.append({
            "dwelling": d.id,
            "ashp": pair[0] if pair else "-",
            "tank": pair[1] if pair else "-",
            "battery": design.battery(d.id) or "-",
            "boiler": design.boiler(d.id) or "-",
            "pv_m2": f"{area:.2f}",
            "panels": f"{area / panel_area:.1f}",
        })
    return pd.DataFrame(rows).to_string(index=False) + "\n"


def trajectory_frame(ledger) -> pd.DataFrame:
    """One row per ledger iteration, for plotting the bound trajectories."""
    return pd.DataFrame([
        {k: r.to_dict()[k] for k in TRAJECTORY_COLUMNS} for r in ledger.records
    ], columns=TRAJECTORY_COLUMNS)


def ledger_frame(ledger) -> pd.DataFrame:
    frame = pd.DataFrame([r.to_dict() for r in ledger.records])
    if frame.empty:
        return pd.DataFrame(columns=TRAJECTORY_COLUMNS + ["milp_status", "nlp_solves", "design"])
    frame["design"] = [
        json.dumps(r.design.selection(), sort_keys=True) if r.design else "" for r in ledger.records
    ]
    return frame


def violations_frame(report: Optional[ViolationReport]) -> pd.DataFrame:
    if report is None:
        return ViolationReport().to_frame()
    return report.to_frame()


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return value


def design_to_dict(design: DesignVector) -> dict:
    return {
        "selection": design.selection(),
        "binaries": [{"key": list(k), "value": v} for k, v in sorted(design.binaries().items())],
    }


def design_from_dict(doc: dict) -> DesignVector:
    return DesignVector.from_binaries({tuple(e["key"]): int(e["value"]) for e in doc["binaries"]})


def result_document(result) -> dict:
    """Machine-readable summary of a RunResult."""
    ledger = result.ledger
    doc: dict[str, Any] = {
        "scenario": result.scenario_name,
        "variant": result.variant,
        "status": ledger.status,
        "objective": result.objective,
        "lub": _finite(ledger.lub),
        "lub_iteration": ledger.lub_iteration,
        "iterations": len(ledger.records),
        "first_milp_objective": result.first_milp_objective,
        "percent_difference_vs_milp": result.percent_difference,
        "elapsed_s": result.elapsed,
        "design": design_to_dict(result.design) if result.design else None,
        "pv_area": dict(result.schedule.pv_area) if result.schedule else None,
        "breakdown": result.breakdown.to_dict() if result.breakdown else None,
        "violations": len(result.violations) if result.violations is not None else None,
        "audit_error": result.audit_error,
        "schedule": result.schedule.to_dict() if result.schedule else None,
    }
    return doc


def write_artifacts(result, scenario: Scenario, output_dir: Union[str, Path]) -> dict[str, Path]:
    """
    Write the result document, ledger, trajectory, breakdown, violations and
    design summary into ``output_dir``.

    Returns:
        Mapping artifact name -> path written
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: output_dir / name for name in
             (RESULT_FILE, LEDGER_FILE, TRAJECTORY_FILE, VIOLATIONS_FILE)}

    paths[RESULT_FILE].write_text(json.dumps(result_document(result), indent=2), encoding="utf-8")
    ledger_frame(result.ledger).to_csv(paths[LEDGER_FILE], index=False)
    trajectory_frame(result.ledger).to_csv(paths[TRAJECTORY_FILE], index=False)
    violations_frame(result.violations).to_csv(paths[VIOLATIONS_FILE], index=False)

    if result.breakdown is not None:
        path = output_dir / BREAKDOWN_FILE
        try:
            path.write_text(render_breakdown(result.breakdown, scenario.settings.tolerances.breakdown_rel),
                            encoding="utf-8")
        except BreakdownMismatchError as e:
            log(f"Breakdown not rendered: {e}")
            path.write_text(f"breakdown rejected: {e}\n", encoding="utf-8")
        paths[BREAKDOWN_FILE] = path
    if result.design is not None and result.schedule is not None:
        path = output_dir / DESIGN_SUMMARY_FILE
        path.write_text(render_design_summary(scenario, result.design, result.schedule), encoding="utf-8")
        paths[DESIGN_SUMMARY_FILE] = path
    return paths


@dataclass
class LoadedResult:
    status: Optional[str]
    variant: str
    objective: Optional[float]
    design: Optional[DesignVector]
    schedule: Optional[ScheduleSolution]
    document: dict


def read_result(path: Union[str, Path]) -> LoadedResult:
    """
    Parse a result document written by ``write_artifacts``.

    Args:
        path: ``result.json`` or the directory holding it
    """
    path = Path(path)
    if path.is_dir():
        path = path / RESULT_FILE
    doc = json.loads(path.read_text(encoding="utf-8"))
    return LoadedResult(
        status=doc.get("status"),
        variant=doc.get("variant", ""),
        objective=doc.get("objective"),
        design=design_from_dict(doc["design"]) if doc.get("design") else None,
        schedule=ScheduleSolution.from_dict(doc["schedule"]) if doc.get("schedule") else None,
        document=doc,
    )
