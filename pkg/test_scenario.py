#!/usr/bin/env python3
"""
Scenario Tests
==============

Tests for scenario ingestion: shipped fixtures, demand synthesis, tariffs,
bundle round trips and the error reporting of malformed inputs.

Run with: python test_scenario.py
"""

import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from scenario import (
    DAYS_PER_YEAR,
    ScenarioError,
    isolated_nodes,
    list_fixtures,
    load_fixture,
    parse_scenario,
    season_scales,
    write_scenario,
)
from testkit import fixture, run_tests


def test_shipped_fixtures_load():
    names = list_fixtures()
    for name in ("two_dwelling", "four_dwelling", "pv_heavy"):
        assert name in names, name
        scenario = load_fixture(name)
        assert sum(s.n_days for s in scenario.seasons) == DAYS_PER_YEAR
        assert len({s.n_steps for s in scenario.seasons}) == 1


def test_two_dwelling_layout():
    scenario = fixture("two_dwelling")
    assert [d.id for d in scenario.dwellings] == ["L9", "L12"]
    assert [s.id for s in scenario.seasons] == ["winter", "spring", "summer", "autumn"]
    assert scenario.network.slack.id == "mv"
    assert len(scenario.network.nodes()) == 15
    assert scenario.n_steps == 24
    assert isolated_nodes(scenario.network) == []


def test_demand_is_peak_times_shape_times_scale():
    scenario = fixture("two_dwelling")
    d = scenario.dwelling("L9")
    for s in scenario.seasons:
        demand = scenario.demand[(d.id, s.id)]
        assert abs(demand.elec.max() - d.peak_elec * s.elec_scale) < 1e-9
        assert abs(demand.heat.max() - d.peak_heat * s.heat_scale) < 1e-9
        assert np.all(demand.elec >= 0) and np.all(demand.heat >= 0)


def test_tariff_series_day_night():
    scenario = fixture("two_dwelling")
    prices = scenario.tariff_series("winter")
    hours = scenario.season("winter").hours
    for h, price in zip(hours, prices):
        expected = scenario.tariffs.night_tariff if h < 7 else scenario.tariffs.day_tariff
        assert price == expected, (h, price)


def test_pv_heavy_tariff_override():
    scenario = load_fixture("pv_heavy")
    assert scenario.tariffs.generation_tariff == 2.0
    assert scenario.catalog.economics.generation_tariff == 2.0
    assert scenario.catalog.feasible_pairs() == []
    assert [b.label for b in scenario.catalog.boilers] == ["Viessmann Combi Vitodens 200-W"]


def test_with_changes_updates_catalog_economics():
    scenario = fixture("two_dwelling")
    changed = scenario.with_changes(tariffs=replace(scenario.tariffs, generation_tariff=0.5))
    assert changed.tariffs.generation_tariff == 0.5
    assert changed.catalog.economics.generation_tariff == 0.5
    assert scenario.tariffs.generation_tariff == 0.1


def test_disconnected_network_rejected():
    scenario = fixture("two_dwelling")
    try:
        scenario.with_changes(lines=scenario.lines[:-1])
    except ScenarioError as e:
        assert "n3" in str(e)
    else:
        raise AssertionError("disconnected network accepted")


def test_unknown_fixture():
    try:
        load_fixture("nowhere")
    except ScenarioError as e:
        assert "two_dwelling" in str(e)
    else:
        raise AssertionError("unknown fixture accepted")


def test_bundle_round_trip():
    scenario = fixture("two_dwelling")
    with tempfile.TemporaryDirectory() as tmp:
        manifest = write_scenario(scenario, Path(tmp) / "bundle")
        again = parse_scenario(manifest)
    assert again.name == scenario.name
    assert again.dwellings == scenario.dwellings
    assert again.buses == scenario.buses
    assert again.catalog.feasible_pairs() == scenario.catalog.feasible_pairs()
    for key, demand in scenario.demand.items():
        assert np.allclose(again.demand[key].elec, demand.elec)
        assert np.allclose(again.demand[key].heat, demand.heat)


def _broken_bundle(tmp: str, table: str, edit) -> Path:
    manifest = write_scenario(fixture("two_dwelling"), Path(tmp) / "bundle")
    path = manifest.parent / table
    frame = pd.read_csv(path, dtype=str)
    edit(frame)
    frame.to_csv(path, index=False)
    return manifest


def test_dangling_bus_reference_reports_line_and_field():
    def edit(frame):
        frame.loc[1, "bus"] = "n9"

    with tempfile.TemporaryDirectory() as tmp:
        manifest = _broken_bundle(tmp, "dwellings.csv", edit)
        try:
            parse_scenario(manifest)
        except ScenarioError as e:
            assert e.line == 3
            assert e.field == "bus"
            assert e.path.name == "dwellings.csv"
        else:
            raise AssertionError("dangling bus accepted")


def test_season_days_must_sum_to_a_year():
    def edit(frame):
        frame.loc[0, "n_days"] = "90"

    with tempfile.TemporaryDirectory() as tmp:
        manifest = _broken_bundle(tmp, "seasons.csv", edit)
        try:
            parse_scenario(manifest)
        except ScenarioError as e:
            assert e.field == "n_days"
        else:
            raise AssertionError("364-day year accepted")


def test_missing_column_reported():
    def edit(frame):
        del frame["peak_heat_kw"]

    with tempfile.TemporaryDirectory() as tmp:
        manifest = _broken_bundle(tmp, "dwellings.csv", edit)
        try:
            parse_scenario(manifest)
        except ScenarioError as e:
            assert e.field == "peak_heat_kw"
        else:
            raise AssertionError("missing column accepted")



def test_missing_season_scales_take_seasonal_defaults():
    def edit(frame):
        del frame["elec_scale"]
        del frame["heat_scale"]

    with tempfile.TemporaryDirectory() as tmp:
        scenario = parse_scenario(_broken_bundle(tmp, "seasons.csv", edit))
    scales = {s.id: (s.elec_scale, s.heat_scale) for s in scenario.seasons}
    assert scales == {"winter": (1.0, 1.0), "spring": (0.9, 0.6), "summer": (0.8, 0.2), "autumn": (0.9, 0.6)}
    assert season_scales("monsoon") == (1.0, 1.0)

    d = scenario.dwelling("L9")
    summer_heat = scenario.demand[(d.id, "summer")].heat
    assert abs(summer_heat.max() - 0.2 * d.peak_heat) < 1e-9

TESTS = [
    test_shipped_fixtures_load,
    test_two_dwelling_layout,
    test_demand_is_peak_times_shape_times_scale,
    test_tariff_series_day_night,
    test_pv_heavy_tariff_override,
    test_with_changes_updates_catalog_economics,
    test_disconnected_network_rejected,
    test_unknown_fixture,
    test_bundle_round_trip,
    test_dangling_bus_reference_reports_line_and_field,
    test_season_days_must_sum_to_a_year,
    test_missing_column_reported,
    test_missing_season_scales_take_seasonal_defaults,
]


def main():
    return run_tests("SCENARIO TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
