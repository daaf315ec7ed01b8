#!/usr/bin/env python3
"""
Power Flow Tests
================

Tests for the per-phase admittance model, the Newton power-flow oracle and
the voltage audit. None of them needs an optimisation solver.

Run with: python test_mopf.py
"""

import cmath
import math
import sys

import numpy as np

from milp_design import DesignVector, ScheduleSolution
from mopf import (
    NetworkError,
    assemble_admittance,
    audit_solution,
    branch_losses,
    newton_power_flow,
)
from scenario import Bus, Line, NetworkData, base_impedance
from testkit import fixture, run_tests


def _two_bus(r_ohm_per_km: float = 0.1) -> NetworkData:
    return NetworkData(
        buses=(Bus("s", ("a",), is_slack=True), Bus("r", ("a",))),
        lines=(Line("s", "r", ("a",), length=1000.0, r_self=r_ohm_per_km, x_self=0.0),),
        transformers=(),
    )


def _three_phase_feeder() -> NetworkData:
    buses = (Bus("s", ("a", "b", "c"), is_slack=True), Bus("n1", ("a", "b", "c")), Bus("n2", ("a", "b", "c")))
    lines = (
        Line("s", "n1", ("a", "b", "c"), 200.0, 0.32, 0.15, 0.05, 0.06),
        Line("n1", "n2", ("a", "b", "c"), 150.0, 0.32, 0.15, 0.05, 0.06),
    )
    return NetworkData(buses=buses, lines=lines, transformers=())


def test_two_bus_closed_form():
    network = _two_bus()
    model = assemble_admittance(network)
    z = 0.1 / base_impedance(400.0, 100.0)
    load = 0.1
    injections = np.array([0.0, -load], dtype=complex)
    state = newton_power_flow(model, injections)
    # V (V - 1) / z = -P for a resistive line and a real slack voltage
    expected = (1.0 + math.sqrt(1.0 - 4.0 * z * load)) / 2.0
    v = state.voltages[model.index("r", "a")]
    assert abs(v - expected) < 1e-9, (v, expected)
    assert state.residual <= 1e-10


def test_zero_injection_returns_no_load_profile():
    scenario = fixture("two_dwelling")
    model = assemble_admittance(scenario)
    state = newton_power_flow(model, np.zeros(model.size, dtype=complex))
    assert state.iterations == 0
    assert np.allclose(state.voltages, model.no_load)
    assert np.allclose(np.abs(model.no_load), 1.0)


def test_transformer_phase_shift():
    scenario = fixture("two_dwelling")
    model = assemble_admittance(scenario)
    for phase, slack_angle in (("a", 0.0), ("b", -120.0), ("c", 120.0)):
        v = model.no_load[model.index("n3", phase)]
        shift = math.degrees(cmath.phase(v / cmath.rect(1.0, math.radians(slack_angle))))
        assert abs(shift - (-30.0)) < 1e-9, (phase, shift)


def test_line_only_ybus_is_symmetric():
    model = assemble_admittance(_three_phase_feeder())
    asym = (model.ybus - model.ybus.T).toarray()
    assert np.max(np.abs(asym)) < 1e-12
    # no shunt: every row sums to zero
    assert np.max(np.abs(model.ybus.toarray().sum(axis=1))) < 1e-9


def test_power_balance_equals_losses():
    network = _three_phase_feeder()
    model = assemble_admittance(network)
    injections = np.zeros(model.size, dtype=complex)
    injections[model.index("n2", "a")] = -0.3 - 0.05j
    injections[model.index("n1", "b")] = 0.2
    injections[model.index("n2", "c")] = -0.1
    state = newton_power_flow(model, injections)

    losses = branch_losses(model, state)
    assert abs(np.sum(state.power) - losses) < 1e-9
    assert losses.real > 0

    # the solution reproduces the requested injections at every PQ node
    assert np.max(np.abs(state.power[model.pq] - injections[model.pq])) < 1e-9


def test_warm_start_gives_same_state():
    model = assemble_admittance(_three_phase_feeder())
    injections = np.zeros(model.size, dtype=complex)
    injections[model.index("n2", "b")] = -0.25
    cold = newton_power_flow(model, injections)
    warm = newton_power_flow(model, injections, v0=cold.voltages)
    assert warm.iterations == 0
    assert np.allclose(warm.voltages, cold.voltages)


def test_unknown_node_index():
    model = assemble_admittance(_two_bus())
    try:
        model.index("r", "b")
    except NetworkError:
        pass
    else:
        raise AssertionError("missing phase accepted")


def _schedule(scenario, sold_kw: dict) -> ScheduleSolution:
    n = scenario.n_steps
    series = {}
    for d in scenario.dwellings:
        for s in scenario.seasons:
            series[("grid", d.id, s.id)] = np.zeros(n)
            series[("sold", d.id, s.id)] = np.zeros(n)
    for (d, s, t), value in sold_kw.items():
        series[("sold", d, s)][t] = value
    return ScheduleSolution(pv_area={}, series=series, objective=0.0)


def test_audit_idle_network_is_clean():
    scenario = fixture("two_dwelling")
    report = audit_solution(scenario, DesignVector.empty(scenario), _schedule(scenario, {}))
    assert report.ok
    assert len(report) == 0
    # 12 non-slack bus-phases over 4 seasons of 24 steps
    assert report.n_checks == 12 * 4 * scenario.n_steps
    assert abs(report.worst_margin - 0.06) < 1e-9
    assert set(report.voltages) == {s.id for s in scenario.seasons}


def test_audit_flags_overvoltage_from_export():
    scenario = fixture("two_dwelling")
    schedule = _schedule(scenario, {("L12", "summer", 12): 80.0})
    report = audit_solution(scenario, None, schedule)
    assert not report.ok
    assert report.count("v_max") >= 1
    assert report.count("v_min") == 0
    assert {(v.season, v.t) for v in report.violations} == {("summer", 12)}
    assert ("n3", "b") in {(v.bus, v.phase) for v in report.violations}
    assert report.worst_margin < 0
    frame = report.to_frame()
    assert list(frame.columns) == ["season", "t", "bus", "phase", "quantity", "value", "bound"]
    assert len(frame) == len(report)


TESTS = [
    test_two_bus_closed_form,
    test_zero_injection_returns_no_load_profile,
    test_transformer_phase_shift,
    test_line_only_ybus_is_symmetric,
    test_power_balance_equals_losses,
    test_warm_start_gives_same_state,
    test_unknown_node_index,
    test_audit_idle_network_is_clean,
    test_audit_flags_overvoltage_from_export,
]


def main():
    return run_tests("POWER FLOW TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
