#!/usr/bin/env python3
"""
Complementarity Tests
=====================

Tests for the regularised buy/sell constraint and the control flow of the
CR and CR-H epsilon loops. The loops are driven by a scripted stand-in for
the NLP handle, so no solver is needed.

Run with: python test_complementarity.py
"""

import sys
import time
from types import SimpleNamespace

import numpy as np
import pyomo.environ as pyo

from backends import INFEASIBLE, ITERATION_LIMIT, LOCALLY_OPTIMAL
from complementarity import (
    COMPLEMENTARITY_MET,
    EPS_FLOOR,
    HEURISTIC_CUTOFF,
    NOT_LOCALLY_OPTIMAL,
    add_complementarity,
    complementarity_product,
    complementarity_residual,
    run_cr,
    run_cr_h,
    schedule_residual,
)
from milp_design import ScheduleSolution
from settings import AlgorithmSettings, EpsilonSchedule
from testkit import run_tests


class ScriptedNlp:
    """Replays (status, objective, residual) triples, one per solve."""

    def __init__(self, script):
        self.script = list(script)
        self.eps_seen = []
        self.warm_starts = []
        self.time_limits = []
        self._last = None

    def set_epsilon(self, eps: float) -> None:
        self.eps_seen.append(eps)

    def solve(self, warm_start: bool = False, time_limit=None):
        self.warm_starts.append(warm_start)
        self.time_limits.append(time_limit)
        self._last = self.script.pop(0)
        status, objective, _ = self._last
        return SimpleNamespace(status=status, objective=objective)

    def residual(self) -> float:
        return self._last[2]

    def extract_schedule(self):
        return SimpleNamespace(objective=self._last[1])


SCHEDULE = EpsilonSchedule()


def _close(values, expected) -> bool:
    return len(values) == len(expected) and all(abs(a - b) <= 1e-12 * max(1.0, abs(b))
                                                for a, b in zip(values, expected))


def test_product_is_per_unit():
    assert complementarity_product(50.0, 50.0, 100.0) == 0.25
    assert complementarity_product(0.5, 0.5) == 0.25
    assert complementarity_product(0.0, 12.0, 100.0) == 0.0


def test_cr_met_on_first_solve():
    nlp = ScriptedNlp([(LOCALLY_OPTIMAL, 120.0, 1e-9)])
    result = run_cr(nlp, SCHEDULE)
    assert result.termination == COMPLEMENTARITY_MET
    assert result.ub == 120.0
    assert result.iterations == 1
    assert result.final_eps == SCHEDULE.eps_initial
    assert result.accepted


def test_cr_tightens_until_met():
    nlp = ScriptedNlp([
        (LOCALLY_OPTIMAL, 100.0, 1e-3),
        (LOCALLY_OPTIMAL, 101.0, 1e-5),
        (LOCALLY_OPTIMAL, 102.0, 1e-9),
    ])
    result = run_cr(nlp, SCHEDULE)
    assert result.termination == COMPLEMENTARITY_MET
    assert result.ub == 102.0
    assert _close(nlp.eps_seen, [1e-2, 1e-3, 1e-4])
    assert nlp.warm_starts == [False, True, True]
    assert [step.residual for step in result.trace] == [1e-3, 1e-5, 1e-9]


def test_cr_loosens_after_failed_solve():
    nlp = ScriptedNlp([
        (INFEASIBLE, None, None),
        (ITERATION_LIMIT, None, None),
        (LOCALLY_OPTIMAL, 90.0, 0.0),
    ])
    result = run_cr(nlp, SCHEDULE)
    assert _close(nlp.eps_seen, [1e-2, 1e-1, 1.0])
    assert result.termination == COMPLEMENTARITY_MET
    assert result.ub == 90.0
    assert result.nlp_solves == 3


def test_cr_rejects_floor_point_above_residual_tolerance():
    schedule = EpsilonSchedule(eps_initial=0.5, reduction_factor=0.5, eps_min=0.125)
    nlp = ScriptedNlp([(LOCALLY_OPTIMAL, 80.0 + n, 1.0) for n in range(5)])
    result = run_cr(nlp, schedule)
    assert result.termination == EPS_FLOOR
    assert nlp.eps_seen == [0.5, 0.25, 0.125]
    assert result.ub is None
    assert not result.accepted
    assert result.final_eps == 0.125
    assert result.schedule.objective == 82.0


def test_cr_accepts_floor_point_within_residual_tolerance():
    schedule = EpsilonSchedule(eps_initial=0.5, reduction_factor=0.5, eps_min=0.125, residual_tol=1e-3)
    nlp = ScriptedNlp([
        (LOCALLY_OPTIMAL, 80.0, 1.0),
        (LOCALLY_OPTIMAL, 81.0, 0.3),
        (LOCALLY_OPTIMAL, 82.0, 0.1255),
    ])
    result = run_cr(nlp, schedule)
    assert result.termination == EPS_FLOOR
    assert result.ub == 82.0
    assert result.accepted


def test_cr_makes_no_solve_after_deadline():
    nlp = ScriptedNlp([(LOCALLY_OPTIMAL, 120.0, 1e-9)])
    result = run_cr(nlp, SCHEDULE, deadline=time.monotonic() - 1.0)
    assert result.timed_out
    assert result.ub is None
    assert result.nlp_solves == 0
    assert nlp.eps_seen == []


def test_cr_passes_remaining_time_to_each_solve():
    nlp = ScriptedNlp([(INFEASIBLE, None, None), (LOCALLY_OPTIMAL, 90.0, 0.0)])
    result = run_cr_h(nlp, SCHEDULE, lub=None, deadline=time.monotonic() + 60.0)
    assert result.termination == COMPLEMENTARITY_MET
    assert not result.timed_out
    assert len(nlp.time_limits) == 2
    assert all(0 < limit <= 60.0 for limit in nlp.time_limits)
    assert nlp.time_limits[1] <= nlp.time_limits[0]

    untimed = ScriptedNlp([(LOCALLY_OPTIMAL, 90.0, 0.0)])
    run_cr(untimed, SCHEDULE)
    assert untimed.time_limits == [None]


def test_cr_gives_up_after_max_iterations():
    schedule = EpsilonSchedule(max_iterations=3)
    nlp = ScriptedNlp([(INFEASIBLE, None, None)] * 3)
    result = run_cr(nlp, schedule)
    assert result.termination == NOT_LOCALLY_OPTIMAL
    assert result.ub is None
    assert result.schedule is None
    assert result.nlp_solves == 3
    assert not result.accepted


def test_cr_h_cuts_off_against_incumbent():
    nlp = ScriptedNlp([(LOCALLY_OPTIMAL, 150.0, 1e-3)])
    result = run_cr_h(nlp, SCHEDULE, lub=100.0)
    assert result.termination == HEURISTIC_CUTOFF
    assert result.ub is None
    assert result.iterations == 1
    assert result.schedule.objective == 150.0


def test_cr_h_without_incumbent_behaves_like_cr():
    script = [(LOCALLY_OPTIMAL, 150.0, 1e-3), (LOCALLY_OPTIMAL, 151.0, 1e-10)]
    plain = run_cr(ScriptedNlp(script), SCHEDULE)
    heuristic = run_cr_h(ScriptedNlp(script), SCHEDULE, lub=None)
    assert heuristic.termination == plain.termination == COMPLEMENTARITY_MET
    assert heuristic.ub == plain.ub == 151.0


def test_cr_h_accepts_point_below_incumbent():
    nlp = ScriptedNlp([(LOCALLY_OPTIMAL, 95.0, 1e-3), (LOCALLY_OPTIMAL, 96.0, 1e-12)])
    result = run_cr_h(nlp, SCHEDULE, lub=100.0)
    assert result.termination == COMPLEMENTARITY_MET
    assert result.ub == 96.0


def _toy_model(scale: float) -> pyo.ConcreteModel:
    m = pyo.ConcreteModel()
    m.I = pyo.Set(initialize=["L9"])
    m.S = pyo.Set(initialize=["winter"])
    m.T = pyo.RangeSet(0, 1)
    m.C = pyo.Set(initialize=[])
    m.grid = pyo.Var(m.I, m.S, m.T, within=pyo.NonNegativeReals)
    m.sold = pyo.Var(m.I, m.S, m.T, within=pyo.NonNegativeReals)
    m.batt_ch = pyo.Var(m.I, m.S, m.T, m.C, within=pyo.NonNegativeReals)
    m.batt_disch = pyo.Var(m.I, m.S, m.T, m.C, within=pyo.NonNegativeReals)
    add_complementarity(m, scale, AlgorithmSettings())
    return m


def test_constraint_and_residual_on_model():
    m = _toy_model(100.0)
    assert len(m.buy_sell_complementarity) == 2
    assert not hasattr(m, "battery_complementarity")
    assert pyo.value(m.eps) == SCHEDULE.eps_initial

    m.grid["L9", "winter", 0].set_value(50.0)
    m.sold["L9", "winter", 0].set_value(20.0)
    m.grid["L9", "winter", 1].set_value(0.0)
    m.sold["L9", "winter", 1].set_value(70.0)
    assert abs(complementarity_residual(m) - 0.1) < 1e-12

    m.eps.set_value(1e-4)
    body = m.buy_sell_complementarity["L9", "winter", 0]
    assert pyo.value(body.body) > pyo.value(body.upper)


def test_schedule_residual():
    series = {
        ("grid", "L9", "winter"): np.array([10.0, 0.0, 3.0]),
        ("sold", "L9", "winter"): np.array([0.0, 8.0, 2.0]),
    }
    schedule = ScheduleSolution(pv_area={}, series=series, objective=0.0)
    assert abs(schedule_residual(schedule, 10.0) - 0.06) < 1e-12


TESTS = [
    test_product_is_per_unit,
    test_cr_met_on_first_solve,
    test_cr_tightens_until_met,
    test_cr_loosens_after_failed_solve,
    test_cr_rejects_floor_point_above_residual_tolerance,
    test_cr_accepts_floor_point_within_residual_tolerance,
    test_cr_makes_no_solve_after_deadline,
    test_cr_passes_remaining_time_to_each_solve,
    test_cr_gives_up_after_max_iterations,
    test_cr_h_cuts_off_against_incumbent,
    test_cr_h_without_incumbent_behaves_like_cr,
    test_cr_h_accepts_point_below_incumbent,
    test_constraint_and_residual_on_model,
    test_schedule_residual,
]


def main():
    return run_tests("COMPLEMENTARITY TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
