#!/usr/bin/env python3
"""
NLP Model Tests
===============

Tests for the fixed-design NLP handle: design and epsilon parameters, and a
solve started from the MILP schedule when the solvers are installed.

Run with: python test_nlp_model.py
"""

import sys

import pyomo.environ as pyo

from backends import ERROR, LOCALLY_OPTIMAL, OPTIMAL, BaseSolverBackend, SolveOutcome
from milp_design import DesignError, DesignVector, build_milp, solve_milp
from nlp_model import build_nlp
from testkit import fixture, requires_solvers, run_tests

BOILER = "Viessmann Combi Vitodens 050-W"


def _boilers(scenario) -> DesignVector:
    return DesignVector.from_selection(scenario, {
        "L9": {"boiler": BOILER},
        "L12": {"boiler": BOILER},
    })


def test_design_is_held_in_parameters():
    scenario = fixture("two_dwelling")
    handle = build_nlp(scenario, _boilers(scenario))
    assert handle.n_binaries == 0
    m = handle.model
    assert pyo.value(m.U["L9", BOILER]) == 1
    assert pyo.value(m.W["L9", "RESU3.3"]) == 0

    heat_pump = DesignVector.from_selection(scenario, {
        "L9": {"ashp": "M2", "tank": "M", "battery": "RESU3.3"},
        "L12": {"boiler": BOILER},
    })
    handle.set_design(heat_pump)
    assert handle.design == heat_pump
    assert pyo.value(m.U["L9", BOILER]) == 0
    assert pyo.value(m.J["L9", "M2", "M"]) == 1
    assert pyo.value(m.W["L9", "RESU3.3"]) == 1
    assert pyo.value(m.U["L12", BOILER]) == 1


def test_epsilon_parameter():
    scenario = fixture("two_dwelling")
    handle = build_nlp(scenario, _boilers(scenario))
    assert handle.epsilon == scenario.settings.epsilon.eps_initial
    handle.set_epsilon(1e-5)
    assert handle.epsilon == 1e-5


def test_rejects_design_from_another_catalog():
    scenario = fixture("two_dwelling")
    builtin = fixture("two_dwelling", catalog="builtin")
    handle = build_nlp(scenario, _boilers(scenario))
    try:
        handle.set_design(DesignVector.empty(builtin))
    except DesignError:
        pass
    else:
        raise AssertionError("foreign design accepted")


class RecordingNlp(BaseSolverBackend):
    """Keeps the per-call config of every solve and reports an error."""

    def __init__(self):
        super().__init__()
        self.configs = []

    @property
    def name(self) -> str:
        return "recording"

    @property
    def kind(self) -> str:
        return "nlp"

    def is_available(self) -> bool:
        return True

    def solve(self, model, config=None) -> SolveOutcome:
        self.configs.append(config)
        return SolveOutcome(status=ERROR, error="not solved")


def test_solve_forwards_time_limit():
    scenario = fixture("two_dwelling")
    backend = RecordingNlp()
    handle = build_nlp(scenario, _boilers(scenario), backend=backend)
    assert handle.solve(warm_start=True, time_limit=42.0).status == ERROR
    assert backend.configs[0].time_limit == 42.0
    handle.solve(warm_start=True)
    assert backend.configs[1] is None
    assert handle.solves == 2


@requires_solvers(milp=True, nlp=True)
def test_solve_from_milp_schedule():
    scenario = fixture("two_dwelling")
    milp = solve_milp(build_milp(scenario), ())
    assert milp.status == OPTIMAL

    handle = build_nlp(scenario, milp.design, start=milp.schedule)
    handle.set_epsilon(1e-4)
    outcome = handle.solve()
    assert outcome.status == LOCALLY_OPTIMAL, outcome.status
    assert outcome.objective is not None
    assert handle.residual() <= 1e-4 * (1 + 1e-6)
    assert handle.solves == 1

    schedule = handle.extract_schedule()
    assert schedule.voltages is not None
    assert set(schedule.voltages) == {s.id for s in scenario.seasons}
    assert abs(schedule.objective - outcome.objective) <= 1e-6 * max(1.0, abs(outcome.objective))


TESTS = [
    test_design_is_held_in_parameters,
    test_epsilon_parameter,
    test_rejects_design_from_another_catalog,
    test_solve_forwards_time_limit,
    test_solve_from_milp_schedule,
]


def main():
    return run_tests("NLP MODEL TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
