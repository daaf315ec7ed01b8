"""
MILP Design Model
=================

Builds the mixed-integer linear design model: annualised-cost objective,
electricity and heat balances, heat pump / hot-water tank selection and tank
dynamics, battery and boiler selection, continuous PV and a lossless
per-phase network flow layer. The DER block is shared with the NLP, where the
design binaries become mutable parameters.
"""

import itertools
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
import pyomo.environ as pyo

from backends import (
    INFEASIBLE,
    OPTIMAL,
    TIME_LIMIT,
    BackendConfig,
    BaseSolverBackend,
    SolveOutcome,
    get_milp_backend,
)
from catalog import CatalogError, evaluate_capacity, evaluate_cop
from scenario import Scenario
from settings import AlgorithmSettings

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log, log_solve
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)

    def log_solve(name: str, status: str, duration_ms: float, detail: str = "") -> None:
        print(f"[{name}] {status} ({duration_ms:.0f}ms) {detail}")


# Water properties for the tank heat balance
WATER_CP = 4.18  # kJ/(kg K)
WATER_RHO = 1000.0  # kg/m3

DAYS_PER_YEAR = 365.0

COST_ROWS = (
    "electricity_purchase",
    "pv_investment",
    "pv_operation",
    "boiler_investment",
    "boiler_operation",
    "battery_investment",
    "battery_operation",
    "ashp_investment",
    "tank_investment",
)
INCOME_ROWS = ("export_income", "generation_income")

ROW_LABELS = {
    "electricity_purchase": "Electricity purchase",
    "pv_investment": "PV investment",
    "pv_operation": "PV operation",
    "boiler_investment": "Boiler investment",
    "boiler_operation": "Boiler operation",
    "battery_investment": "Battery investment",
    "battery_operation": "Battery operation",
    "ashp_investment": "ASHP investment",
    "tank_investment": "HW Tank investment",
    "export_income": "Export income",
    "generation_income": "Generation income",
}


class DesignError(ValueError):
    """Raised when a design vector violates cardinality or compatibility."""


# ("J", dwelling, ashp, tank) | ("W", dwelling, battery) | ("U", dwelling, boiler)
BinaryKey = tuple


def design_keys(scenario: Scenario) -> list[BinaryKey]:
    """All design binaries of a scenario in canonical order."""
    catalog = scenario.catalog
    keys: list[BinaryKey] = []
    for d in scenario.dwellings:
        keys += [("J", d.id, p, k) for p, k in catalog.feasible_pairs()]
        keys += [("W", d.id, c.label) for c in catalog.batteries]
        keys += [("U", d.id, b.label) for b in catalog.boilers]
    return keys


@dataclass(frozen=True)
class DesignVector:
    """Binary design decisions: ASHP-tank pair J, battery W, boiler U per dwelling."""

    J: Mapping[tuple[str, str, str], int]
    W: Mapping[tuple[str, str], int]
    U: Mapping[tuple[str, str], int]

    def __hash__(self):
        return hash(self.key())

    def binaries(self) -> dict[BinaryKey, int]:
        values: dict[BinaryKey, int] = {}
        values.update({("J",) + k: int(v) for k, v in self.J.items()})
        values.update({("W",) + k: int(v) for k, v in self.W.items()})
        values.update({("U",) + k: int(v) for k, v in self.U.items()})
        return values

    def key(self) -> tuple:
        return tuple(sorted(self.binaries().items()))

    def ashp_tank(self, dwelling: str) -> Optional[tuple[str, str]]:
        for (i, p, k), v in self.J.items():
            if i == dwelling and v:
                return p, k
        return None

    def battery(self, dwelling: str) -> Optional[str]:
        return next((c for (i, c), v in self.W.items() if i == dwelling and v), None)

    def boiler(self, dwelling: str) -> Optional[str]:
        return next((b for (i, b), v in self.U.items() if i == dwelling and v), None)

    def validate(self, scenario: Scenario) -> None:
        """
        Check the vector against a scenario.

        Raises:
            DesignError: unknown or missing binaries, values outside {0, 1},
                more than one option per family and dwelling, or an
                incompatible ASHP-tank pair
        """
        expected = set(design_keys(scenario))
        values = self.binaries()
        for key in values:
            if key[0] == "J" and not scenario.catalog.compatibility.is_feasible(key[2], key[3]):
                raise DesignError(f"{key[1]}: ASHP {key[2]} is not compatible with tank {key[3]}")
        unknown = set(values) - expected
        if unknown:
            raise DesignError(f"unknown design binaries: {sorted(unknown)[:3]}")
        missing = expected - set(values)
        if missing:
            raise DesignError(f"missing design binaries: {sorted(missing)[:3]}")
        for key, v in values.items():
            if v not in (0, 1):
                raise DesignError(f"binary {key} = {v} is not 0 or 1")
        for d in scenario.dwellings:
            for family in ("J", "W", "U"):
                chosen = sum(v for key, v in values.items() if key[0] == family and key[1] == d.id)
                if chosen > 1:
                    raise DesignError(f"{d.id}: more than one {family} option selected")

    def selection(self) -> dict[str, dict[str, Optional[str]]]:
        dwellings = sorted({k[0] for k in self.J} | {k[0] for k in self.W} | {k[0] for k in self.U})
        out = {}
        for i in dwellings:
            pair = self.ashp_tank(i)
            out[i] = {
                "ashp": pair[0] if pair else None,
                "tank": pair[1] if pair else None,
                "battery": self.battery(i),
                "boiler": self.boiler(i),
            }
        return out

    @classmethod
    def from_binaries(cls, values: Mapping[BinaryKey, int]) -> "DesignVector":
        return cls(
            J={k[1:]: int(v) for k, v in values.items() if k[0] == "J"},
            W={k[1:]: int(v) for k, v in values.items() if k[0] == "W"},
            U={k[1:]: int(v) for k, v in values.items() if k[0] == "U"},
        )

    @classmethod
    def from_selection(cls, scenario: Scenario,
                       selection: Mapping[str, Mapping[str, Optional[str]]]) -> "DesignVector":
        """
        Build a full vector from per-dwelling choices.

        Args:
            selection: ``{dwelling: {"ashp", "tank", "battery", "boiler"}}``;
                missing dwellings or entries mean "nothing selected"
        """
        values = {}
        for key in design_keys(scenario):
            chosen = selection.get(key[1], {})
            if key[0] == "J":
                values[key] = int(chosen.get("ashp") == key[2] and chosen.get("tank") == key[3])
            elif key[0] == "W":
                values[key] = int(chosen.get("battery") == key[2])
            else:
                values[key] = int(chosen.get("boiler") == key[2])
        return cls.from_binaries(values)

    @classmethod
    def empty(cls, scenario: Scenario) -> "DesignVector":
        return cls.from_binaries({key: 0 for key in design_keys(scenario)})


def design_space_size(scenario: Scenario) -> int:
    """Number of design vectors satisfying the per-dwelling cardinality limits."""
    catalog = scenario.catalog
    per_dwelling = (len(catalog.feasible_pairs()) + 1) * (len(catalog.batteries) + 1) * (len(catalog.boilers) + 1)
    return per_dwelling ** len(scenario.dwellings)


def enumerate_designs(scenario: Scenario) -> Iterator[DesignVector]:
    """Yield every cardinality- and compatibility-feasible design vector."""
    catalog = scenario.catalog
    choices = list(itertools.product(
        [None] + catalog.feasible_pairs(),
        [None] + [c.label for c in catalog.batteries],
        [None] + [b.label for b in catalog.boilers],
    ))
    ids = [d.id for d in scenario.dwellings]
    for combo in itertools.product(choices, repeat=len(ids)):
        selection = {
            i: {
                "ashp": pair[0] if pair else None,
                "tank": pair[1] if pair else None,
                "battery": battery,
                "boiler": boiler,
            }
            for i, (pair, battery, boiler) in zip(ids, combo)
        }
        yield DesignVector.from_selection(scenario, selection)


def _series_key(key: tuple) -> str:
    return "|".join(str(part) for part in key)


@dataclass
class ScheduleSolution:
    """
    Continuous operational solution.

    ``series`` maps a key such as ``("grid", dwelling, season)`` or
    ``("battery_energy", dwelling, season, battery)`` to its values over the
    time steps (kW, kWh or C). ``voltages`` maps a season to a complex array
    (time step x network node) when a network state is attached.
    """

    pv_area: dict[str, float]
    series: dict[tuple, np.ndarray]
    objective: float
    voltages: Optional[dict[str, np.ndarray]] = None

    def get(self, quantity: str, *index: str) -> np.ndarray:
        return self.series[(quantity,) + tuple(index)]

    def net_injection_kw(self, dwelling: str, season: str) -> np.ndarray:
        """Export minus purchase (kW) per time step."""
        return self.get("sold", dwelling, season) - self.get("grid", dwelling, season)

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {
            "objective": self.objective,
            "pv_area": dict(self.pv_area),
            "series": {_series_key(k): [float(x) for x in v] for k, v in self.series.items()},
        }
        if self.voltages is not None:
            doc["voltages"] = {
                s: {"re": v.real.tolist(), "im": v.imag.tolist()} for s, v in self.voltages.items()
            }
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScheduleSolution":
        voltages = None
        if doc.get("voltages"):
            voltages = {
                s: np.asarray(v["re"], dtype=float) + 1j * np.asarray(v["im"], dtype=float)
                for s, v in doc["voltages"].items()
            }
        return cls(
            pv_area={k: float(v) for k, v in doc["pv_area"].items()},
            series={tuple(k.split("|")): np.asarray(v, dtype=float) for k, v in doc["series"].items()},
            objective=float(doc["objective"]),
            voltages=voltages,
        )


@dataclass(frozen=True)
class CostBreakdown:
    """Annualised cost rows (currency/yr); incomes are stored as positive amounts."""

    electricity_purchase: float = 0.0
    pv_investment: float = 0.0
    pv_operation: float = 0.0
    boiler_investment: float = 0.0
    boiler_operation: float = 0.0
    battery_investment: float = 0.0
    battery_operation: float = 0.0
    ashp_investment: float = 0.0
    tank_investment: float = 0.0
    export_income: float = 0.0
    generation_income: float = 0.0
    objective: float = 0.0

    def row_sum(self) -> float:
        return sum(getattr(self, r) for r in COST_ROWS) - sum(getattr(self, r) for r in INCOME_ROWS)

    def rows(self) -> list[tuple[str, float]]:
        """(label, signed value) in table order, incomes negated."""
        out = [(ROW_LABELS[r], getattr(self, r)) for r in COST_ROWS]
        out += [(ROW_LABELS[r], -getattr(self, r)) for r in INCOME_ROWS]
        return out

    def mismatch(self) -> float:
        """Relative gap between the objective and the row sum."""
        scale = max(1.0, abs(self.objective))
        return abs(self.objective - self.row_sum()) / scale

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def percentage_difference(final: float, initial: float) -> float:
    """100 (final - initial) / initial."""
    if initial == 0:
        raise ValueError("initial value must be non-zero")
    return 100.0 * (final - initial) / initial


@dataclass(frozen=True)
class _ModelData:
    """Per-scenario numbers feeding the DER block."""

    cop: dict[tuple[str, int, str], float]
    hp_cap: dict[tuple[str, int, str], float]
    active: dict[tuple[str, int, str], bool]
    elec_load: dict[tuple[str, str, int], float]
    heat_load: dict[tuple[str, str, int], float]
    tariff: dict[tuple[str, int], float]
    m_grid: dict[str, float]
    m_sold: dict[str, float]
    m_tank_charge: float
    m_tank_discharge: dict[str, float]


def _model_data(scenario: Scenario, settings: AlgorithmSettings) -> _ModelData:
    catalog = scenario.catalog
    economics = scenario.tariffs
    cop, hp_cap, active = {}, {}, {}
    for s in scenario.seasons:
        for t, t_air in enumerate(s.t_air):
            for p in catalog.ashps:
                on = t_air > p.t_min
                active[s.id, t, p.label] = on
                cop[s.id, t, p.label] = evaluate_cop(p, t_air)
                hp_cap[s.id, t, p.label] = max(evaluate_capacity(p, t_air), 0.0) if on else 0.0

    elec_load, heat_load, tariff = {}, {}, {}
    for d in scenario.dwellings:
        for s in scenario.seasons:
            demand = scenario.demand[d.id, s.id]
            for t in range(s.n_steps):
                elec_load[d.id, s.id, t] = float(demand.elec[t])
                heat_load[d.id, s.id, t] = float(demand.heat[t])
    for s in scenario.seasons:
        for t, price in enumerate(scenario.tariff_series(s.id)):
            tariff[s.id, t] = float(price)

    max_hp_elec = max(
        (hp_cap[k] / cop[k] for k in hp_cap if active[k] and cop[k] > 0), default=0.0)
    max_batt = max((c.max_power for c in catalog.batteries), default=0.0)
    max_irr = max(max(s.irradiance) for s in scenario.seasons)
    m_grid, m_sold, m_disch = {}, {}, {}
    for d in scenario.dwellings:
        peak = max(v for (i, _, _), v in elec_load.items() if i == d.id)
        m_grid[d.id] = peak + max_hp_elec + (max_batt if settings.allow_grid_charging else 0.0)
        pv_cap = d.max_pv_area * economics.pv_efficiency * max_irr if settings.pv_enabled else 0.0
        m_sold[d.id] = pv_cap + max_batt
        m_disch[d.id] = max(v for (i, _, _), v in heat_load.items() if i == d.id)
    return _ModelData(
        cop=cop, hp_cap=hp_cap, active=active, elec_load=elec_load, heat_load=heat_load,
        tariff=tariff, m_grid=m_grid, m_sold=m_sold,
        m_tank_charge=max(hp_cap.values(), default=0.0),
        m_tank_discharge=m_disch,
    )


def add_der_block(m: pyo.ConcreteModel, scenario: Scenario, settings: AlgorithmSettings,
                  design: Optional[DesignVector] = None) -> None:
    """
    Add sets, design components, operational variables, DER constraints and
    cost expressions to ``m``.

    With ``design`` given, J/W/U are mutable parameters holding the design
    and the cardinality constraints are left out.
    """
    catalog = scenario.catalog
    economics = scenario.tariffs
    data = _model_data(scenario, settings)
    m._data = data
    n_steps = scenario.n_steps
    pairs = catalog.feasible_pairs()
    tanks_of = {p.label: [k for (q, k) in pairs if q == p.label] for p in catalog.ashps}
    ashps_of = {k.label: [p for (p, q) in pairs if q == k.label] for k in catalog.tanks}
    seasons = {s.id: s for s in scenario.seasons}
    dwellings = {d.id: d for d in scenario.dwellings}
    ashps = {p.label: p for p in catalog.ashps}
    tanks = {k.label: k for k in catalog.tanks}
    boilers = {b.label: b for b in catalog.boilers}
    batteries = {c.label: c for c in catalog.batteries}
    crf = economics.crf

    m.I = pyo.Set(initialize=list(dwellings), ordered=True, doc="dwellings")
    m.S = pyo.Set(initialize=list(seasons), ordered=True, doc="seasons")
    m.T = pyo.RangeSet(0, n_steps - 1, doc="time steps")
    m.T0 = pyo.RangeSet(0, n_steps, doc="battery boundary states")
    m.P = pyo.Set(initialize=list(ashps), ordered=True, doc="heat pumps")
    m.K = pyo.Set(initialize=list(tanks), ordered=True, doc="hot water tanks")
    m.PK = pyo.Set(dimen=2, initialize=pairs, ordered=True, doc="compatible heat pump-tank pairs")
    m.C = pyo.Set(initialize=list(batteries), ordered=True, doc="batteries")
    m.B = pyo.Set(initialize=list(boilers), ordered=True, doc="boilers")

    # Design: binaries in the MILP, fixed parameters in the NLP
    if design is None:
        m.J = pyo.Var(m.I, m.PK, within=pyo.Binary, doc="heat pump-tank pair selected")
        m.W = pyo.Var(m.I, m.C, within=pyo.Binary, doc="battery selected")
        m.U = pyo.Var(m.I, m.B, within=pyo.Binary, doc="boiler selected")
    else:
        m.J = pyo.Param(m.I, m.PK, mutable=True, initialize=dict(design.J), doc="heat pump-tank pair selected")
        m.W = pyo.Param(m.I, m.C, mutable=True, initialize=dict(design.W), doc="battery selected")
        m.U = pyo.Param(m.I, m.B, mutable=True, initialize=dict(design.U), doc="boiler selected")

    def sum_j_ashp(i, p):
        return sum(m.J[i, p, k] for k in tanks_of[p])

    def sum_j_tank(i, k):
        return sum(m.J[i, p, k] for p in ashps_of[k])

    pv_ub = {i: (d.max_pv_area if settings.pv_enabled else 0.0) for i, d in dwellings.items()}

    # Operational variables
    m.grid = pyo.Var(m.I, m.S, m.T, within=pyo.NonNegativeReals, doc="electricity purchased (kW)")
    m.sold = pyo.Var(m.I, m.S, m.T, within=pyo.NonNegativeReals, doc="electricity exported (kW)")
    m.pv = pyo.Var(m.I, m.S, m.T, within=pyo.NonNegativeReals, doc="PV output (kW)")
    m.pv_area = pyo.Var(m.I, within=pyo.NonNegativeReals, bounds=lambda m, i: (0.0, pv_ub[i]),
                        doc="installed PV area (m2)")
    m.batt_ch = pyo.Var(m.I, m.S, m.T, m.C, within=pyo.NonNegativeReals, doc="battery charging (kW)")
    m.batt_disch = pyo.Var(m.I, m.S, m.T, m.C, within=pyo.NonNegativeReals, doc="battery discharging (kW)")
    m.batt_energy = pyo.Var(m.I, m.S, m.T0, m.C, within=pyo.NonNegativeReals, doc="battery stored energy (kWh)")
    m.hp_heat = pyo.Var(m.I, m.S, m.T, m.PK, within=pyo.NonNegativeReals, doc="heat pump output to tank (kW)")
    m.hp_elec = pyo.Var(m.I, m.S, m.T, m.P, within=pyo.NonNegativeReals, doc="heat pump electricity draw (kW)")
    m.tank_temp = pyo.Var(m.I, m.S, m.T, m.K, within=pyo.NonNegativeReals, doc="tank temperature (C)")
    m.tank_ch = pyo.Var(m.I, m.S, m.T, m.K, within=pyo.NonNegativeReals, doc="tank charging (kW)")
    m.tank_disch = pyo.Var(m.I, m.S, m.T, m.K, within=pyo.NonNegativeReals, doc="tank discharging (kW)")
    m.tank_loss = pyo.Var(m.I, m.S, m.T, m.K, within=pyo.NonNegativeReals, doc="tank heat loss (kW)")
    m.boiler_heat = pyo.Var(m.I, m.S, m.T, m.B, within=pyo.NonNegativeReals, doc="boiler heat (kW)")

    # =========================================================================
    #                     Electricity and heat balances
    # =========================================================================
    def electricity_balance(m, i, s, t):
        return (data.elec_load[i, s, t] + sum(m.hp_elec[i, s, t, p] for p in m.P)
                + sum(m.batt_ch[i, s, t, c] for c in m.C) + m.sold[i, s, t]
                == m.grid[i, s, t] + m.pv[i, s, t] + sum(m.batt_disch[i, s, t, c] for c in m.C))
    m.electricity_balance = pyo.Constraint(m.I, m.S, m.T, rule=electricity_balance,
                                           doc="load + heat pumps + charging + export = grid + PV + discharge")

    def grid_purchase_cap(m, i, s, t):
        cap = data.elec_load[i, s, t] + sum(m.hp_elec[i, s, t, p] for p in m.P)
        if settings.allow_grid_charging:
            cap = cap + sum(m.batt_ch[i, s, t, c] for c in m.C)
        return m.grid[i, s, t] <= cap
    m.grid_purchase_cap = pyo.Constraint(m.I, m.S, m.T, rule=grid_purchase_cap,
                                         doc="purchases never exceed own consumption")

    def heat_balance(m, i, s, t):
        return data.heat_load[i, s, t] == (sum(m.tank_disch[i, s, t, k] for k in m.K)
                                          + sum(m.boiler_heat[i, s, t, b] for b in m.B))
    m.heat_balance = pyo.Constraint(m.I, m.S, m.T, rule=heat_balance,
                                    doc="heat demand met by tank discharge and boilers")

    # =========================================================================
    #                                   PV
    # =========================================================================
    def pv_output(m, i, s, t):
        return m.pv[i, s, t] <= m.pv_area[i] * economics.pv_efficiency * seasons[s].irradiance[t]
    m.pv_output = pyo.Constraint(m.I, m.S, m.T, rule=pv_output, doc="PV output <= area * efficiency * irradiance")

    def pv_rated_capacity(m, i, s, t):
        return m.pv[i, s, t] <= m.pv_area[i] / economics.panel_area * economics.panel_capacity
    m.pv_rated_capacity = pyo.Constraint(m.I, m.S, m.T, rule=pv_rated_capacity,
                                         doc="PV output <= installed panel rating")

    # =========================================================================
    #                        Heat pumps and hot water tanks
    # =========================================================================
    if design is None:
        m.one_pair = pyo.Constraint(m.I, rule=lambda m, i: (sum(m.J[i, p, k] for (p, k) in m.PK) <= 1) if len(m.PK) else pyo.Constraint.Feasible,
                                    doc="at most one heat pump-tank pair per dwelling")

    def tank_charging(m, i, s, t, k):
        return m.tank_ch[i, s, t, k] == sum(m.hp_heat[i, s, t, p, k] for p in ashps_of[k])
    m.tank_charging = pyo.Constraint(m.I, m.S, m.T, m.K, rule=tank_charging,
                                     doc="all heat pump output charges its tank")

    def cop_coupling(m, i, s, t, p):
        if not tanks_of[p] or not data.active[s, t, p]:
            return m.hp_elec[i, s, t, p] == 0
        return m.hp_elec[i, s, t, p] == sum(m.hp_heat[i, s, t, p, k] for k in tanks_of[p]) / data.cop[s, t, p]
    m.cop_coupling = pyo.Constraint(m.I, m.S, m.T, m.P, rule=cop_coupling,
                                    doc="electricity draw = heat output / COP")

    def hp_capacity(m, i, s, t, p):
        if not tanks_of[p]:
            return pyo.Constraint.Skip
        return (sum(m.hp_heat[i, s, t, p, k] for k in tanks_of[p])
                <= data.hp_cap[s, t, p] * sum_j_ashp(i, p))
    m.hp_capacity = pyo.Constraint(m.I, m.S, m.T, m.P, rule=hp_capacity,
                                   doc="heat output limited by ambient-dependent capacity")

    def hp_cutoff(m, i, s, t, p):
        if not tanks_of[p] or data.active[s, t, p]:
            return pyo.Constraint.Skip
        return sum(m.hp_heat[i, s, t, p, k] for k in tanks_of[p]) == 0
    m.hp_cutoff = pyo.Constraint(m.I, m.S, m.T, m.P, rule=hp_cutoff,
                                 doc="no heat pump output at or below its minimum operating temperature")

    def tank_dynamics(m, i, s, t, k):
        tank = tanks[k]
        kappa = WATER_CP * tank.volume * WATER_RHO / (seasons[s].timestep * 3600.0)
        if t == 0:
            previous = seasons[s].t_air[0] * sum_j_tank(i, k)
        else:
            previous = m.tank_temp[i, s, t - 1, k]
        return (kappa * (m.tank_temp[i, s, t, k] - previous)
                == tank.eta_ch * m.tank_ch[i, s, t, k] - m.tank_disch[i, s, t, k] / tank.eta_disch
                - m.tank_loss[i, s, t, k])
    m.tank_dynamics = pyo.Constraint(m.I, m.S, m.T, m.K, rule=tank_dynamics,
                                     doc="non-stratified tank heat balance, first step from ambient")

    m.tank_heat_loss = pyo.Constraint(
        m.I, m.S, m.T, m.K,
        rule=lambda m, i, s, t, k: m.tank_loss[i, s, t, k] == tanks[k].heat_loss * sum_j_tank(i, k),
        doc="standing loss of a selected tank")
    m.tank_temp_max = pyo.Constraint(
        m.I, m.S, m.T, m.K,
        rule=lambda m, i, s, t, k: m.tank_temp[i, s, t, k] <= catalog.supply_temperature * sum_j_tank(i, k),
        doc="tank temperature <= supply temperature")
    m.tank_temp_min = pyo.Constraint(
        m.I, m.S, m.T, m.K,
        rule=lambda m, i, s, t, k: m.tank_temp[i, s, t, k] >= tanks[k].t_min * sum_j_tank(i, k),
        doc="tank temperature >= tank minimum")
    m.tank_cyclic = pyo.Constraint(
        m.I, m.S, m.K,
        rule=lambda m, i, s, k: m.tank_temp[i, s, m.T.first(), k] == m.tank_temp[i, s, m.T.last(), k],
        doc="same tank temperature at the start and end of each representative day")
    m.tank_charge_select = pyo.Constraint(
        m.I, m.S, m.T, m.K,
        rule=lambda m, i, s, t, k: m.tank_ch[i, s, t, k] <= data.m_tank_charge * sum_j_tank(i, k),
        doc="unselected tanks do not charge")
    m.tank_discharge_select = pyo.Constraint(
        m.I, m.S, m.T, m.K,
        rule=lambda m, i, s, t, k: m.tank_disch[i, s, t, k] <= data.m_tank_discharge[i] * sum_j_tank(i, k),
        doc="unselected tanks do not discharge")

    # =========================================================================
    #                                Batteries
    # =========================================================================
    if design is None:
        m.one_battery = pyo.Constraint(m.I, rule=lambda m, i: (sum(m.W[i, c] for c in m.C) <= 1) if len(m.C) else pyo.Constraint.Feasible,
                                       doc="at most one battery per dwelling")
    m.battery_charge_limit = pyo.Constraint(
        m.I, m.S, m.T, m.C,
        rule=lambda m, i, s, t, c: m.batt_ch[i, s, t, c] <= batteries[c].max_power * m.W[i, c],
        doc="charging power limit")
    m.battery_discharge_limit = pyo.Constraint(
        m.I, m.S, m.T, m.C,
        rule=lambda m, i, s, t, c: m.batt_disch[i, s, t, c] <= batteries[c].max_power * m.W[i, c],
        doc="discharging power limit")

    def battery_dynamics(m, i, s, t, c):
        batt = batteries[c]
        dt = seasons[s].timestep
        return (m.batt_energy[i, s, t + 1, c] == m.batt_energy[i, s, t, c]
                + batt.eta_ch * m.batt_ch[i, s, t, c] * dt - m.batt_disch[i, s, t, c] * dt / batt.eta_disch)
    m.battery_dynamics = pyo.Constraint(m.I, m.S, m.T, m.C, rule=battery_dynamics,
                                        doc="stored energy balance with charge/discharge losses")
    m.battery_soc_max = pyo.Constraint(
        m.I, m.S, m.T0, m.C,
        rule=lambda m, i, s, t, c: m.batt_energy[i, s, t, c] <= batteries[c].max_soc * batteries[c].capacity * m.W[i, c],
        doc="stored energy <= state-of-charge limit")
    m.battery_dod_min = pyo.Constraint(
        m.I, m.S, m.T0, m.C,
        rule=lambda m, i, s, t, c: (m.batt_energy[i, s, t, c]
                                    >= (1.0 - batteries[c].max_dod) * batteries[c].capacity * m.W[i, c]),
        doc="stored energy >= depth-of-discharge limit")
    m.battery_cyclic = pyo.Constraint(
        m.I, m.S, m.C,
        rule=lambda m, i, s, c: m.batt_energy[i, s, m.T0.first(), c] == m.batt_energy[i, s, m.T0.last(), c],
        doc="same stored energy at the start and end of each representative day")

    # =========================================================================
    #                                 Boilers
    # =========================================================================
    if design is None:
        m.one_boiler = pyo.Constraint(m.I, rule=lambda m, i: (sum(m.U[i, b] for b in m.B) <= 1) if len(m.B) else pyo.Constraint.Feasible,
                                      doc="at most one boiler per dwelling")
    m.boiler_capacity = pyo.Constraint(
        m.I, m.S, m.T, m.B,
        rule=lambda m, i, s, t, b: m.boiler_heat[i, s, t, b] <= boilers[b].h_max * m.U[i, b],
        doc="boiler heat <= rated capacity")

    # =========================================================================
    #                          Annualised costs (GBP/yr)
    # =========================================================================
    def seasonal(term):
        return sum(
            seasons[s].n_days * seasons[s].timestep * sum(term(i, s, t) for i in m.I for t in m.T)
            for s in m.S
        )

    panels = sum(m.pv_area[i] for i in m.I) / economics.panel_area
    rows = {
        "electricity_purchase": seasonal(lambda i, s, t: m.grid[i, s, t] * data.tariff[s, t]),
        "pv_investment": crf * economics.pv_panel_cost * panels,
        "pv_operation": economics.pv_fixed_om * economics.panel_capacity * panels,
        "boiler_investment": crf * sum(m.U[i, b] * (boilers[b].unit_cost + boilers[b].install_cost)
                                       for i in m.I for b in m.B),
        "boiler_operation": seasonal(lambda i, s, t: sum(
            m.boiler_heat[i, s, t, b] * economics.gas_price / boilers[b].efficiency for b in m.B)),
        "battery_investment": crf * sum(m.W[i, c] * (batteries[c].unit_cost + batteries[c].install_cost)
                                        for i in m.I for c in m.C),
        "battery_operation": sum(m.W[i, c] * batteries[c].annual_op_cost for i in m.I for c in m.C)
                             * sum(seasons[s].n_days for s in m.S) / DAYS_PER_YEAR,
        "ashp_investment": crf * sum(m.J[i, p, k] * (ashps[p].unit_cost + ashps[p].install_cost)
                                     for i in m.I for (p, k) in m.PK),
        "tank_investment": crf * sum(m.J[i, p, k] * catalog.compatibility.cost(p, k)
                                     for i in m.I for (p, k) in m.PK),
        "export_income": seasonal(lambda i, s, t: m.sold[i, s, t] * economics.export_tariff),
        "generation_income": seasonal(lambda i, s, t: m.pv[i, s, t] * economics.generation_tariff),
    }
    m.ROWS = pyo.Set(initialize=list(COST_ROWS + INCOME_ROWS), ordered=True)
    m.cost = pyo.Expression(m.ROWS, rule=lambda m, r: rows[r], doc="annualised cost rows")
    m.total_cost = pyo.Expression(
        expr=sum(m.cost[r] for r in COST_ROWS) - sum(m.cost[r] for r in INCOME_ROWS),
        doc="total annualised cost")


def add_network_flow_block(m: pyo.ConcreteModel, scenario: Scenario) -> None:
    """
    Lossless per-phase flow conservation over lines and transformers, with
    each transformer phase limited to a third of its kVA rating.
    """
    network = scenario.network
    slack = network.slack.id
    branches = [(l.from_bus, l.to_bus, l.phases, None) for l in network.lines]
    branches += [(tx.from_bus, tx.to_bus, network.bus(tx.to_bus).phases, tx.rating / 3.0)
                 for tx in network.transformers]
    arcs = [(n, ph) for n, (_, _, phases, _) in enumerate(branches) for ph in phases]

    at_node: dict[tuple[str, str], list[str]] = {}
    for d in scenario.dwellings:
        at_node.setdefault((d.bus, d.phase), []).append(d.id)

    m.ARCS = pyo.Set(dimen=2, initialize=arcs, ordered=True, doc="branch phases")
    m.flow = pyo.Var(m.ARCS, m.S, m.T, within=pyo.Reals, doc="active power flow from->to (kW)")

    def flow_limit(m, n, ph, s, t):
        limit = branches[n][3]
        if limit is None:
            return pyo.Constraint.Skip
        return pyo.inequality(-limit, m.flow[n, ph, s, t], limit)
    m.transformer_limit = pyo.Constraint(m.ARCS, m.S, m.T, rule=flow_limit,
                                         doc="transformer phase loading within rating")

    nodes = [node for node in network.nodes() if node[0] != slack]
    m.FLOW_NODES = pyo.Set(dimen=2, initialize=nodes, ordered=True)

    def flow_conservation(m, bus, ph, s, t):
        inflow = sum(m.flow[n, ph, s, t] for n, (_, to_bus, phases, _) in enumerate(branches)
                     if to_bus == bus and ph in phases)
        outflow = sum(m.flow[n, ph, s, t] for n, (from_bus, _, phases, _) in enumerate(branches)
                      if from_bus == bus and ph in phases)
        injection = sum(m.sold[i, s, t] - m.grid[i, s, t] for i in at_node.get((bus, ph), []))
        return inflow - outflow + injection == 0
    m.flow_conservation = pyo.Constraint(m.FLOW_NODES, m.S, m.T, rule=flow_conservation,
                                         doc="lossless per-phase power balance")


def add_buy_sell_binaries(m: pyo.ConcreteModel) -> None:
    """Operational binaries forbidding simultaneous purchase and export."""
    data = m._data
    m.X = pyo.Var(m.I, m.S, m.T, within=pyo.Binary, doc="1 if exporting at (i, s, t)")
    m.no_buy_when_selling = pyo.Constraint(
        m.I, m.S, m.T, rule=lambda m, i, s, t: m.grid[i, s, t] <= data.m_grid[i] * (1 - m.X[i, s, t]),
        doc="purchase only when not exporting")
    m.no_sell_when_buying = pyo.Constraint(
        m.I, m.S, m.T, rule=lambda m, i, s, t: m.sold[i, s, t] <= data.m_sold[i] * m.X[i, s, t],
        doc="export only when not purchasing")


def extract_schedule(m: pyo.ConcreteModel, scenario: Scenario) -> ScheduleSolution:
    """Read operational variable values out of a solved DER model."""

    def values(component, keys) -> np.ndarray:
        return np.array([pyo.value(component[k], exception=False) or 0.0 for k in keys], dtype=float)

    T = list(m.T)
    T0 = list(m.T0)
    series: dict[tuple, np.ndarray] = {}
    for i in m.I:
        for s in m.S:
            for name in ("grid", "sold", "pv"):
                series[(name, i, s)] = values(getattr(m, name), [(i, s, t) for t in T])
            if hasattr(m, "X"):
                series[("x", i, s)] = np.round(values(m.X, [(i, s, t) for t in T]))
            for c in m.C:
                series[("battery_charge", i, s, c)] = values(m.batt_ch, [(i, s, t, c) for t in T])
                series[("battery_discharge", i, s, c)] = values(m.batt_disch, [(i, s, t, c) for t in T])
                series[("battery_energy", i, s, c)] = values(m.batt_energy, [(i, s, t, c) for t in T0])
            for (p, k) in m.PK:
                series[("hp_heat", i, s, p, k)] = values(m.hp_heat, [(i, s, t, p, k) for t in T])
            for p in m.P:
                series[("hp_elec", i, s, p)] = values(m.hp_elec, [(i, s, t, p) for t in T])
            for k in m.K:
                series[("tank_temp", i, s, k)] = values(m.tank_temp, [(i, s, t, k) for t in T])
                series[("tank_charge", i, s, k)] = values(m.tank_ch, [(i, s, t, k) for t in T])
                series[("tank_discharge", i, s, k)] = values(m.tank_disch, [(i, s, t, k) for t in T])
                series[("tank_loss", i, s, k)] = values(m.tank_loss, [(i, s, t, k) for t in T])
            for b in m.B:
                series[("boiler_heat", i, s, b)] = values(m.boiler_heat, [(i, s, t, b) for t in T])

    return ScheduleSolution(
        pv_area={i: float(pyo.value(m.pv_area[i], exception=False) or 0.0) for i in m.I},
        series=series,
        objective=float(pyo.value(m.total_cost, exception=False) or 0.0),
    )


def apply_schedule(m: pyo.ConcreteModel, schedule: ScheduleSolution) -> None:
    """Load a schedule into the model's variables as a starting point."""
    for i in m.I:
        if i in schedule.pv_area:
            m.pv_area[i].set_value(schedule.pv_area[i], skip_validation=True)

    targets = {
        "grid": (m.grid, 0), "sold": (m.sold, 0), "pv": (m.pv, 0),
        "battery_charge": (m.batt_ch, 1), "battery_discharge": (m.batt_disch, 1),
        "battery_energy": (m.batt_energy, 1), "hp_heat": (m.hp_heat, 2), "hp_elec": (m.hp_elec, 1),
        "tank_temp": (m.tank_temp, 1), "tank_charge": (m.tank_ch, 1),
        "tank_discharge": (m.tank_disch, 1), "tank_loss": (m.tank_loss, 1),
        "boiler_heat": (m.boiler_heat, 1),
    }
    for key, vals in schedule.series.items():
        if key[0] not in targets:
            continue
        component, n_device = targets[key[0]]
        i, s = key[1], key[2]
        device = key[3:3 + n_device]
        for t, v in enumerate(vals):
            index = (i, s, t) + tuple(device)
            if index in component:
                component[index].set_value(float(v), skip_validation=True)


def extract_breakdown(scenario: Scenario, design: DesignVector, schedule: ScheduleSolution) -> CostBreakdown:
    """
    Recompute every cost row from the schedule and catalog prices.

    The objective row is the schedule's solver objective, so a mismatch with
    the row sum exposes modelling or extraction errors.
    """
    catalog = scenario.catalog
    economics = scenario.tariffs
    crf = economics.crf
    total_days = sum(s.n_days for s in scenario.seasons)

    def seasonal(quantity: str, price: Any, *device: str) -> float:
        total = 0.0
        for s in scenario.seasons:
            weight = s.n_days * s.timestep
            prices = price(s) if callable(price) else price
            for d in scenario.dwellings:
                key = (quantity, d.id, s.id) + device
                if key in schedule.series:
                    total += weight * float(np.sum(schedule.series[key] * prices))
        return total

    panels = sum(schedule.pv_area.values()) / economics.panel_area
    rows = dict.fromkeys(COST_ROWS + INCOME_ROWS, 0.0)
    rows["electricity_purchase"] = seasonal("grid", lambda s: scenario.tariff_series(s.id))
    rows["pv_investment"] = crf * economics.pv_panel_cost * panels
    rows["pv_operation"] = economics.pv_fixed_om * economics.panel_capacity * panels
    rows["export_income"] = seasonal("sold", economics.export_tariff)
    rows["generation_income"] = seasonal("pv", economics.generation_tariff)

    for d in scenario.dwellings:
        boiler = design.boiler(d.id)
        if boiler:
            option = catalog.boiler(boiler)
            rows["boiler_investment"] += crf * (option.unit_cost + option.install_cost)
        battery = design.battery(d.id)
        if battery:
            option = catalog.battery(battery)
            rows["battery_investment"] += crf * (option.unit_cost + option.install_cost)
            rows["battery_operation"] += option.annual_op_cost * total_days / DAYS_PER_YEAR
        pair = design.ashp_tank(d.id)
        if pair:
            ashp = catalog.ashp(pair[0])
            rows["ashp_investment"] += crf * (ashp.unit_cost + ashp.install_cost)
            rows["tank_investment"] += crf * catalog.compatibility.cost(*pair)
    for b in catalog.boilers:
        rows["boiler_operation"] += seasonal("boiler_heat", economics.gas_price / b.efficiency, b.label)

    return CostBreakdown(objective=schedule.objective, **rows)


@dataclass
class MilpHandle:
    """A built MILP plus the cuts already added to it."""

    scenario: Scenario
    settings: AlgorithmSettings
    model: pyo.ConcreteModel
    backend: BaseSolverBackend
    applied_cuts: set = field(default_factory=set)

    def binary_var(self, key: BinaryKey):
        return getattr(self.model, key[0])[key[1:]]

    @property
    def n_binaries(self) -> int:
        return sum(1 for v in self.model.component_data_objects(pyo.Var) if v.is_binary())

    @property
    def n_design_binaries(self) -> int:
        return len(design_keys(self.scenario))


@dataclass
class MilpResult:
    status: str
    lb: Optional[float] = None
    design: Optional[DesignVector] = None
    schedule: Optional[ScheduleSolution] = None
    outcome: Optional[SolveOutcome] = None


def build_milp(scenario: Scenario, settings: Optional[AlgorithmSettings] = None,
               backend: Optional[BaseSolverBackend] = None) -> MilpHandle:
    """
    Build the design MILP for a scenario.

    Raises:
        CatalogError: If the catalog offers no device at all
    """
    settings = settings or scenario.settings
    if scenario.catalog.is_empty:
        raise CatalogError("cannot build a design model from an empty catalog")

    m = pyo.ConcreteModel(name=f"des_milp_{scenario.name}")
    add_der_block(m, scenario, settings)
    add_buy_sell_binaries(m)
    add_network_flow_block(m, scenario)
    m.integer_cuts = pyo.ConstraintList(doc="integer cuts")
    m.objective = pyo.Objective(expr=m.total_cost, sense=pyo.minimize, doc="total annualised cost")

    backend = backend or get_milp_backend(settings.milp_backend,
                                          BackendConfig(mip_gap=settings.milp_gap))
    return MilpHandle(scenario=scenario, settings=settings, model=m, backend=backend)


def apply_cuts(handle: MilpHandle, cuts: Iterable[Any]) -> int:
    """
    Add the cuts not yet present in the model.

    Each cut must expose ``b0``/``b1`` sets of design binary keys.

    Returns:
        Number of cuts added
    """
    added = 0
    for cut in cuts:
        key = (frozenset(cut.b0), frozenset(cut.b1))
        if key in handle.applied_cuts:
            continue
        expr = (sum(handle.binary_var(k) for k in cut.b0)
                + sum(1 - handle.binary_var(k) for k in cut.b1))
        handle.model.integer_cuts.add(expr=expr >= 1)
        handle.applied_cuts.add(key)
        added += 1
    return added


def fix_design(handle: MilpHandle, design: DesignVector) -> None:
    """Fix every design binary of the MILP to the given design."""
    for key, value in design.binaries().items():
        handle.binary_var(key).fix(value)


def unfix_design(handle: MilpHandle) -> None:
    for key in design_keys(handle.scenario):
        handle.binary_var(key).unfix()


def _design_from_model(handle: MilpHandle) -> DesignVector:
    return DesignVector.from_binaries({
        key: int(round(pyo.value(handle.binary_var(key), exception=False) or 0.0))
        for key in design_keys(handle.scenario)
    })


def solve_milp(handle: MilpHandle, cuts: Sequence[Any] = (),
               settings: Optional[AlgorithmSettings] = None,
               time_limit: Optional[float] = None) -> MilpResult:
    """
    Solve the MILP with the accumulated cuts.

    Returns:
        MilpResult with status optimal (LB, design and schedule set),
        time-limit (design and schedule of the incumbent, no LB),
        infeasible or error
    """
    settings = settings or handle.settings
    if cuts and not design_keys(handle.scenario):
        # A single cut exhausts a design space without binaries
        return MilpResult(status=INFEASIBLE)
    apply_cuts(handle, cuts)

    config = BackendConfig(time_limit=time_limit, mip_gap=settings.milp_gap)
    outcome = handle.backend.solve(handle.model, config)
    detail = f"obj={outcome.objective:,.2f}" if outcome.objective is not None else (outcome.error or "")
    log_solve("MILP", outcome.status, outcome.duration_ms, detail)

    if outcome.status == OPTIMAL or (outcome.status == TIME_LIMIT and outcome.has_solution):
        schedule = extract_schedule(handle.model, handle.scenario)
        optimal = outcome.status == OPTIMAL
        # LB only from a proven optimum
        return MilpResult(
            status=OPTIMAL if optimal else TIME_LIMIT,
            lb=float(pyo.value(handle.model.total_cost)) if optimal else None,
            design=_design_from_model(handle),
            schedule=schedule,
            outcome=outcome,
        )
    return MilpResult(status=outcome.status, outcome=outcome)
