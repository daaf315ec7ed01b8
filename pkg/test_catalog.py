#!/usr/bin/env python3
"""
Catalog Tests
=============

Tests for the technology catalog: annualisation, performance curves,
technology restriction and document validation.

Run with: python test_catalog.py
"""

import copy
import json
import math
import sys
import tempfile
from pathlib import Path

from catalog import (
    CATALOG_DIR,
    CatalogError,
    EconomicScalars,
    catalog_from_dict,
    catalog_to_dict,
    crf,
    evaluate_capacity,
    evaluate_cop,
    load_builtin_catalog,
    load_catalog,
)
from testkit import run_tests


def _tiny_doc() -> dict:
    return json.loads((CATALOG_DIR / "tiny.json").read_text(encoding="utf-8"))


def test_crf_reference_value():
    # 7.5 % over 20 years
    assert abs(crf(0.075, 20) - 0.098092) < 1e-5
    assert abs(EconomicScalars().crf - crf(0.075, 20)) < 1e-12


def test_crf_zero_rate_limit():
    assert crf(0.0, 20) == 1.0 / 20
    assert abs(crf(1e-9, 20) - 0.05) < 1e-6


def test_crf_rejects_bad_input():
    for rate, lifetime in ((0.05, 0), (-0.01, 20)):
        try:
            crf(rate, lifetime)
        except CatalogError:
            continue
        raise AssertionError(f"crf({rate}, {lifetime}) should raise")


def test_cop_curve():
    ashp = load_catalog(CATALOG_DIR / "tiny.json").ashp("M2")
    p = ashp.cop_params
    at_7 = evaluate_cop(ashp, 7.0)
    assert abs(at_7 - (p.L / (1 + math.exp(-p.k * (7.0 - p.x0))) + p.b)) < 1e-12
    assert 2.5 < at_7 < 3.0
    assert evaluate_cop(ashp, -10.0) < evaluate_cop(ashp, 0.0) < at_7


def test_capacity_curve():
    ashp = load_catalog(CATALOG_DIR / "tiny.json").ashp("M2")
    assert evaluate_capacity(ashp, 0.0) == 14.37
    c = ashp.cap_params
    t = -7.0
    assert abs(evaluate_capacity(ashp, t) - (c.a * t ** 3 + c.b * t ** 2 + c.c * t + c.d)) < 1e-12


def test_builtin_catalog_contents():
    catalog = load_builtin_catalog()
    assert len(catalog.ashps) == 4
    assert len(catalog.tanks) == 4
    assert len(catalog.boilers) == 4
    assert len(catalog.batteries) == 3
    for p, k in catalog.feasible_pairs():
        assert catalog.compatibility.cost(p, k) > 0



def test_builtin_l1_is_two_m2_units():
    catalog = load_builtin_catalog()
    l1, m2 = catalog.ashp("L1"), catalog.ashp("M2")
    for n in range(100):
        t = -15.0 + 0.45 * n
        assert abs(evaluate_capacity(l1, t) - 2.0 * evaluate_capacity(m2, t)) < 1e-9
    # Doubled M2 coefficients differ from the printed L1 row only in the last digit
    assert abs(l1.cap_params.a - 0.001195) <= 1.01e-6
    assert abs(l1.cap_params.d - 28.75) <= 0.0101


def test_builtin_boiler_labels():
    labels = [b.label for b in load_builtin_catalog().boilers]
    assert labels == [
        "Ideal Logic Combi 24",
        "Potterton Combi Assure 25",
        "Viessmann Combi Vitodens 050-W",
        "Viessmann Combi Vitodens 200-W",
    ]

def test_restricted_drops_families():
    catalog = load_catalog(CATALOG_DIR / "tiny.json")
    no_ashp = catalog.restricted(["pv", "battery", "boiler"])
    assert no_ashp.ashps == () and no_ashp.tanks == ()
    assert no_ashp.feasible_pairs() == []
    assert len(no_ashp.batteries) == 1 and len(no_ashp.boilers) == 1

    boilers_only = catalog.restricted(["boiler"])
    assert boilers_only.batteries == () and len(boilers_only.boilers) == 1
    assert not boilers_only.is_empty
    assert catalog.restricted(["pv"]).is_empty


def test_restricted_rejects_unknown_technology():
    catalog = load_catalog(CATALOG_DIR / "tiny.json")
    try:
        catalog.restricted(["pv", "wind"])
    except CatalogError as e:
        assert "wind" in str(e)
    else:
        raise AssertionError("unknown technology accepted")


def test_lookup_by_label():
    catalog = load_catalog(CATALOG_DIR / "tiny.json")
    assert catalog.tank("M").volume == 0.21
    assert catalog.battery("RESU3.3").max_power == 3.0
    try:
        catalog.boiler("missing")
    except KeyError:
        pass
    else:
        raise AssertionError("missing label found")


def test_null_compatibility_marks_infeasible_pair():
    doc = _tiny_doc()
    doc["tanks"].append(dict(doc["tanks"][0], label="S"))
    doc["compatibility"]["M2"]["S"] = None
    catalog = catalog_from_dict(doc)
    assert catalog.compatibility.is_feasible("M2", "M")
    assert not catalog.compatibility.is_feasible("M2", "S")
    assert catalog.feasible_pairs() == [("M2", "M")]


def test_invalid_documents_rejected():
    broken = []

    doc = _tiny_doc()
    doc["batteries"][0]["max_dod"] = 1.2
    broken.append(doc)

    doc = _tiny_doc()
    doc["tanks"][0]["t_min_c"] = 60.0
    broken.append(doc)

    doc = _tiny_doc()
    doc["compatibility"]["M2"]["X"] = 100.0
    broken.append(doc)

    doc = _tiny_doc()
    del doc["boilers"][0]["h_max_kw"]
    broken.append(doc)

    doc = _tiny_doc()
    doc["ashps"][0]["cop"]["b"] = -10.0
    broken.append(doc)

    doc = _tiny_doc()
    doc["economics"] = {"lifetime": 20, "heat_tariff": 0.1}
    broken.append(doc)

    for n, doc in enumerate(broken):
        try:
            catalog_from_dict(doc)
        except CatalogError:
            continue
        raise AssertionError(f"broken document {n} accepted")


def test_missing_file_and_bad_json():
    with tempfile.TemporaryDirectory() as tmp:
        try:
            load_catalog(Path(tmp) / "absent.json")
        except CatalogError as e:
            assert "not found" in str(e)
        else:
            raise AssertionError("missing file accepted")

        bad = Path(tmp) / "bad.json"
        bad.write_text("{ not json", encoding="utf-8")
        try:
            load_catalog(bad)
        except CatalogError as e:
            assert "invalid JSON" in str(e)
        else:
            raise AssertionError("bad JSON accepted")


def test_catalog_document_round_trip():
    catalog = load_builtin_catalog()
    again = catalog_from_dict(copy.deepcopy(catalog_to_dict(catalog)))
    assert again.feasible_pairs() == catalog.feasible_pairs()
    assert again.economics == catalog.economics
    assert [b.label for b in again.boilers] == [b.label for b in catalog.boilers]


TESTS = [
    test_crf_reference_value,
    test_crf_zero_rate_limit,
    test_crf_rejects_bad_input,
    test_cop_curve,
    test_capacity_curve,
    test_builtin_catalog_contents,
    test_builtin_l1_is_two_m2_units,
    test_builtin_boiler_labels,
    test_restricted_drops_families,
    test_restricted_rejects_unknown_technology,
    test_lookup_by_label,
    test_null_compatibility_marks_infeasible_pair,
    test_invalid_documents_rejected,
    test_missing_file_and_bad_json,
    test_catalog_document_round_trip,
]


def main():
    return run_tests("CATALOG TESTS", TESTS)


if __name__ == "__main__":
    sys.exit(main())
