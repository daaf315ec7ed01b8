#!/usr/bin/env python3
"""
Orchestrator Tests
==================

Tests for integer cuts, the bounds ledger and complete decomposition runs.
Runs that need solvers are skipped when those solvers are missing.

Run with: python test_orchestrator.py
"""

import math
import sys

from milp_design import DesignVector, enumerate_designs
from orchestrator import (
    CONVERGED_BOUND_CROSSING,
    CONVERGED_EXHAUSTED,
    MILP_ONLY,
    BoundsLedger,
    BruteForceCapError,
    IterationRecord,
    brute_force_reference,
    make_cut,
    run,
)
from scenario import load_fixture
from testkit import fixture, requires_solvers, run_tests

BOILER = "Viessmann Combi Vitodens 050-W"


def _record(iteration: int, lb=None, ub=None, lub=math.inf) -> IterationRecord:
    return IterationRecord(iteration, lb, ub, lub, None, "optimal", None, 0.1, 0.1 * (iteration + 1))


def test_cut_excludes_only_its_design():
    scenario = fixture("two_dwelling")
    design = DesignVector.from_selection(scenario, {
        "L9": {"ashp": "M2", "tank": "M", "boiler": BOILER},
        "L12": {"battery": "RESU3.3", "boiler": BOILER},
    })
    cut = make_cut(design, iteration=4)
    assert cut.iteration == 4
    assert len(cut.b1) == 4 and len(cut.b0) == 2
    assert cut.excludes(design)
    assert cut.lhs(design) == 0

    excluded = 0
    for other in enumerate_designs(scenario):
        if cut.excludes(other):
            excluded += 1
            assert other == design
        else:
            assert cut.lhs(other) >= 1
    assert excluded == 1


def test_ledger_tracks_lowest_upper_bound():
    ledger = BoundsLedger()
    assert not ledger.has_incumbent
    assert ledger.offer(0, None) is False
    assert ledger.offer(0, 120.0) is True
    assert ledger.offer(1, 130.0) is False
    assert ledger.offer(2, 110.0) is True
    assert ledger.lub == 110.0 and ledger.lub_iteration == 2
    assert ledger.has_incumbent


def test_ledger_bound_lists():
    ledger = BoundsLedger()
    ledger.record(_record(0, lb=90.0, ub=120.0, lub=120.0))
    ledger.record(_record(1, lb=95.0, ub=None, lub=120.0))
    ledger.record(_record(2, lb=None, ub=None, lub=120.0))
    assert ledger.lower_bounds() == [90.0, 95.0]
    assert ledger.upper_bounds() == [120.0]
    row = ledger.records[0].to_dict()
    assert row["lb"] == 90.0 and row["lub"] == 120.0
    assert _record(0).to_dict()["lub"] is None


def test_brute_force_cap():
    scenario = load_fixture("two_dwelling")
    try:
        brute_force_reference(scenario)
    except BruteForceCapError as e:
        assert "48400" in str(e)
    else:
        raise AssertionError("brute force ran over the cap")


@requires_solvers(milp=True)
def test_milp_only_run():
    scenario = fixture("two_dwelling")
    settings = scenario.settings.with_overrides(variant="milp-only")
    seen = []
    result = run(scenario, settings, on_iteration=seen.append)
    assert result.status == MILP_ONLY
    assert len(seen) == 1 and len(result.ledger.records) == 1
    assert result.objective == result.first_milp_objective
    assert result.percent_difference == 0.0
    assert result.breakdown.mismatch() < 1e-5
    assert result.violations is not None


@requires_solvers(milp=True)
def test_milp_schedule_violates_band_on_pv_heavy():
    scenario = load_fixture("pv_heavy")
    settings = scenario.settings.with_overrides(variant="milp-only")
    result = run(scenario, settings)
    assert result.status == MILP_ONLY
    assert result.violations is not None
    assert result.violations.count("v_max") > 0


@requires_solvers(milp=True, nlp=True)
def test_pa_exhausts_single_boiler_design_space():
    scenario = load_fixture("pv_heavy")
    result = run(scenario)
    ledger = result.ledger
    assert ledger.status == CONVERGED_EXHAUSTED
    assert len(ledger.records) == 2
    assert len(ledger.cuts) == 1
    assert ledger.records[-1].lb is None
    if ledger.has_incumbent:
        assert result.objective >= ledger.records[0].lb - 1e-6 * abs(ledger.records[0].lb)
        assert result.violations is None or result.violations.ok


@requires_solvers(milp=True, nlp=True)
def test_pa_h_on_two_dwelling_terminates():
    scenario = fixture("two_dwelling")
    settings = scenario.settings.with_overrides(variant="pa-h", max_iterations=30, time_limit=1800.0)
    result = run(scenario, settings)
    ledger = result.ledger
    assert ledger.status in (CONVERGED_BOUND_CROSSING, CONVERGED_EXHAUSTED), ledger.status
    lbs = ledger.lower_bounds()
    assert all(b >= a - 1e-5 * max(1.0, abs(a)) for a, b in zip(lbs, lbs[1:]))
    if ledger.status == CONVERGED_BOUND_CROSSING:
        assert ledger.records[-1].lb > ledger.lub
    # no design is proposed twice
    designs = [r.design for r in ledger.records if r.cr_termination is not None]
    assert len(designs) == len(set(designs))


TESTS = [
    test_cut_excludes_only_its_design,
    test_ledger_tracks_lowest_upper_bound,
    test_ledger_bound_lists,
    test_brute_force_cap,
    test_milp_only_run,
    test_milp_schedule_violates_band_on_pv_heavy,
    test_pa_exhausts_single_boiler_design_space,
    test_pa_h_on_two_dwelling_terminates,
]


def main():
    return run_tests("ORCHESTRATOR TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
