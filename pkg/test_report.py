#!/usr/bin/env python3
"""
Report Tests
============

Tests for the cost table, the design summary and the result artifacts
written at the end of a run.

Run with: python test_report.py
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from milp_design import CostBreakdown, DesignVector, ScheduleSolution
from orchestrator import CONVERGED_BOUND_CROSSING, BoundsLedger, IterationRecord, RunResult
from report import (
    BREAKDOWN_FILE,
    DESIGN_SUMMARY_FILE,
    LEDGER_FILE,
    RESULT_FILE,
    TRAJECTORY_COLUMNS,
    TRAJECTORY_FILE,
    VIOLATIONS_FILE,
    BreakdownMismatchError,
    read_result,
    render_breakdown,
    render_design_summary,
    write_artifacts,
)
from testkit import fixture, run_tests

BOILER = "Viessmann Combi Vitodens 050-W"


def _breakdown() -> CostBreakdown:
    return CostBreakdown(
        electricity_purchase=1203.4, pv_investment=331.0, pv_operation=22.5,
        boiler_investment=250.6, boiler_operation=612.0, export_income=98.2,
        generation_income=2477.0, objective=1203.4 + 331.0 + 22.5 + 250.6 + 612.0 - 98.2 - 2477.0,
    )


def test_render_breakdown_signs_and_total():
    text = render_breakdown(_breakdown())
    lines = text.splitlines()
    generation = next(line for line in lines if line.startswith("Generation income"))
    assert generation.split()[-1] == "-2,477"
    export = next(line for line in lines if line.startswith("Export income"))
    assert export.split()[-1] == "-98"
    total = lines[-1]
    assert total.startswith("Objective value")
    assert total.split()[-1] == "-156"
    labels = [line.split("  ")[0].strip() for line in lines[2:]]
    assert labels.index("Electricity purchase") < labels.index("HW Tank investment") < labels.index("Export income")


def test_render_breakdown_rejects_mismatch():
    off = CostBreakdown(electricity_purchase=1000.0, objective=1100.0)
    try:
        render_breakdown(off)
    except BreakdownMismatchError as e:
        assert "row sum" in str(e)
    else:
        raise AssertionError("mismatched breakdown rendered")


def test_negative_zero_is_printed_as_zero():
    tiny = CostBreakdown(export_income=0.3, objective=-0.3)
    line = next(l for l in render_breakdown(tiny).splitlines() if l.startswith("Export income"))
    assert line.split()[-1] == "0"


def _schedule(scenario) -> ScheduleSolution:
    n = scenario.n_steps
    series = {}
    for d in scenario.dwellings:
        for s in scenario.seasons:
            series[("grid", d.id, s.id)] = np.full(n, 0.5)
            series[("sold", d.id, s.id)] = np.zeros(n)
    return ScheduleSolution(pv_area={"L9": 3.5, "L12": 0.0}, series=series, objective=321.0)


def _design(scenario) -> DesignVector:
    return DesignVector.from_selection(scenario, {
        "L9": {"ashp": "M2", "tank": "M"},
        "L12": {"boiler": BOILER},
    })


def test_design_summary_table():
    scenario = fixture("two_dwelling")
    text = render_design_summary(scenario, _design(scenario), _schedule(scenario))
    rows = text.splitlines()
    assert len(rows) == 3
    assert "M2" in rows[1] and "3.50" in rows[1] and "2.0" in rows[1]
    assert BOILER.split()[0] in rows[2]


def _result(scenario) -> RunResult:
    ledger = BoundsLedger()
    design = _design(scenario)
    ledger.record(IterationRecord(0, 300.0, 321.0, 321.0, "complementarity-met", "optimal", design, 1.2, 1.2, 3))
    ledger.record(IterationRecord(1, 330.0, None, 321.0, None, "optimal", design, 0.4, 1.6))
    ledger.offer(0, 321.0)
    ledger.status = CONVERGED_BOUND_CROSSING
    return RunResult(
        scenario_name=scenario.name, variant="pa", ledger=ledger, design=design,
        schedule=_schedule(scenario), breakdown=CostBreakdown(electricity_purchase=321.0, objective=321.0),
        first_milp_objective=300.0, percent_difference=7.0, elapsed=1.6,
    )


def test_artifacts_written_and_read_back():
    scenario = fixture("two_dwelling")
    result = _result(scenario)
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_artifacts(result, scenario, Path(tmp) / "out")
        for name in (RESULT_FILE, LEDGER_FILE, TRAJECTORY_FILE, VIOLATIONS_FILE,
                     BREAKDOWN_FILE, DESIGN_SUMMARY_FILE):
            assert paths[name].exists(), name

        trajectory = pd.read_csv(paths[TRAJECTORY_FILE])
        assert list(trajectory.columns) == TRAJECTORY_COLUMNS
        assert list(trajectory["lb"]) == [300.0, 330.0]
        assert pd.read_csv(paths[VIOLATIONS_FILE]).empty

        loaded = read_result(paths[RESULT_FILE].parent)
    assert loaded.status == CONVERGED_BOUND_CROSSING
    assert loaded.variant == "pa"
    assert loaded.objective == 321.0
    assert loaded.design == result.design
    assert loaded.schedule.objective == 321.0
    assert np.allclose(loaded.schedule.get("grid", "L9", "winter"), 0.5)
    assert loaded.document["iterations"] == 2
    assert loaded.document["percent_difference_vs_milp"] == 7.0
    assert loaded.document["audit_error"] is None


def test_result_without_incumbent():
    scenario = fixture("two_dwelling")
    ledger = BoundsLedger()
    ledger.status = "time-limit"
    result = RunResult(scenario_name=scenario.name, variant="pa-h", ledger=ledger)
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_artifacts(result, scenario, tmp)
        assert BREAKDOWN_FILE not in paths
        loaded = read_result(paths[RESULT_FILE])
    assert loaded.objective is None
    assert loaded.design is None and loaded.schedule is None
    assert loaded.document["lub"] is None



def test_failed_audit_is_recorded():
    scenario = fixture("two_dwelling")
    result = _result(scenario)
    result.audit_error = "Newton iteration did not converge in winter t=18"
    with tempfile.TemporaryDirectory() as tmp:
        paths = write_artifacts(result, scenario, tmp)
        loaded = read_result(paths[RESULT_FILE])
    assert loaded.document["audit_error"] == result.audit_error
    assert loaded.document["violations"] is None

TESTS = [
    test_render_breakdown_signs_and_total,
    test_render_breakdown_rejects_mismatch,
    test_negative_zero_is_printed_as_zero,
    test_design_summary_table,
    test_artifacts_written_and_read_back,
    test_result_without_incumbent,
    test_failed_audit_is_recorded,
]


def main():
    return run_tests("REPORT TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
