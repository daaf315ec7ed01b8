"""
Technology Catalog
==================

Discrete device options (heat pumps, hot-water tanks, boilers, batteries), the
PV and tariff scalars, and the fitted heat-pump performance curves.

The built-in dataset ships as ``data/catalogs/builtin.json`` and goes through
the same parser as user catalogs.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional


DATA_DIR = Path(__file__).parent / "data"
CATALOG_DIR = DATA_DIR / "catalogs"
BUILTIN_CATALOG = CATALOG_DIR / "builtin.json"

# Ambient range over which the fitted curves must stay physical
CURVE_CHECK_RANGE_C = (-20.0, 40.0)

TECHNOLOGIES = ("pv", "battery", "boiler", "ashp")


class CatalogError(ValueError):
    """Raised when a catalog document is malformed or inconsistent."""


@dataclass(frozen=True)
class CopParams:
    """Sigmoid COP coefficients: L / (1 + exp(-k (T - x0))) + b."""

    L: float
    x0: float
    k: float
    b: float


@dataclass(frozen=True)
class CapacityParams:
    """Cubic capacity coefficients: a T^3 + b T^2 + c T + d (kW)."""

    a: float
    b: float
    c: float
    d: float


@dataclass(frozen=True)
class AshpOption:
    label: str
    t_min: float
    unit_cost: float
    install_cost: float
    cop_params: CopParams
    cap_params: CapacityParams


@dataclass(frozen=True)
class TankOption:
    label: str
    volume: float
    eta_ch: float
    eta_disch: float
    t_min: float
    heat_loss: float


@dataclass(frozen=True)
class BoilerOption:
    label: str
    h_max: float
    efficiency: float
    unit_cost: float
    install_cost: float


@dataclass(frozen=True)
class BatteryOption:
    label: str
    capacity: float
    max_dod: float
    max_soc: float
    unit_cost: float
    install_cost: float
    annual_op_cost: float
    eta_ch: float
    eta_disch: float
    max_power: float


@dataclass(frozen=True)
class EconomicScalars:
    """Tariffs, PV scalars and annualisation inputs (currency in GBP)."""

    lifetime: int = 20
    interest_rate: float = 0.075
    gas_price: float = 0.02514
    day_tariff: float = 0.18
    night_tariff: float = 0.08
    export_tariff: float = 0.0503
    generation_tariff: float = 0.1
    pv_panel_cost: float = 450.0
    pv_efficiency: float = 0.18
    pv_fixed_om: float = 12.5
    panel_area: float = 1.75
    panel_capacity: float = 0.25

    def __post_init__(self):
        prices = ("gas_price", "day_tariff", "night_tariff", "export_tariff",
                  "generation_tariff", "pv_panel_cost", "pv_fixed_om")
        for name in prices:
            if getattr(self, name) < 0:
                raise CatalogError(f"economics.{name} must be >= 0")
        if not 0 < self.pv_efficiency < 1:
            raise CatalogError("economics.pv_efficiency must lie in (0, 1)")
        if self.lifetime < 1:
            raise CatalogError("economics.lifetime must be >= 1")
        if self.interest_rate < 0:
            raise CatalogError("economics.interest_rate must be >= 0")
        if self.panel_area <= 0 or self.panel_capacity <= 0:
            raise CatalogError("economics.panel_area and panel_capacity must be > 0")

    @property
    def crf(self) -> float:
        return crf(self.interest_rate, self.lifetime)


@dataclass(frozen=True)
class AshpTankCompatibility:
    """(ashp, tank) -> tank cost; pairs absent from ``costs`` are infeasible."""

    costs: dict[tuple[str, str], float] = field(default_factory=dict)

    def is_feasible(self, ashp: str, tank: str) -> bool:
        return (ashp, tank) in self.costs

    def cost(self, ashp: str, tank: str) -> Optional[float]:
        return self.costs.get((ashp, tank))

    def pairs(self) -> list[tuple[str, str]]:
        return list(self.costs)


@dataclass(frozen=True)
class TechnologyCatalog:
    ashps: tuple[AshpOption, ...]
    tanks: tuple[TankOption, ...]
    compatibility: AshpTankCompatibility
    boilers: tuple[BoilerOption, ...]
    batteries: tuple[BatteryOption, ...]
    economics: EconomicScalars
    supply_temperature: float = 55.0
    name: str = "catalog"

    def __post_init__(self):
        _validate_catalog(self)

    @property
    def is_empty(self) -> bool:
        return not (self.ashps or self.boilers or self.batteries)

    def ashp(self, label: str) -> AshpOption:
        return _by_label(self.ashps, label, "ASHP")

    def tank(self, label: str) -> TankOption:
        return _by_label(self.tanks, label, "tank")

    def boiler(self, label: str) -> BoilerOption:
        return _by_label(self.boilers, label, "boiler")

    def battery(self, label: str) -> BatteryOption:
        return _by_label(self.batteries, label, "battery")

    def feasible_pairs(self) -> list[tuple[str, str]]:
        """Feasible (ashp, tank) pairs in catalog order."""
        return [
            (p.label, k.label)
            for p in self.ashps
            for k in self.tanks
            if self.compatibility.is_feasible(p.label, k.label)
        ]

    def restricted(self, technologies: Iterable[str]) -> "TechnologyCatalog":
        """
        Return a copy keeping only the enabled device families.

        Args:
            technologies: Any subset of ``TECHNOLOGIES``. PV is handled by the
                scenario (area cap), so it is accepted and ignored here.
        """
        enabled = set(technologies)
        unknown = enabled - set(TECHNOLOGIES)
        if unknown:
            raise CatalogError(f"Unknown technologies: {', '.join(sorted(unknown))}")

        keep_ashp = "ashp" in enabled
        return replace(
            self,
            ashps=self.ashps if keep_ashp else (),
            tanks=self.tanks if keep_ashp else (),
            compatibility=self.compatibility if keep_ashp else AshpTankCompatibility(),
            boilers=self.boilers if "boiler" in enabled else (),
            batteries=self.batteries if "battery" in enabled else (),
        )


def _by_label(options, label: str, kind: str):
    for option in options:
        if option.label == label:
            return option
    raise KeyError(f"No {kind} named {label!r} in catalog")


def evaluate_cop(ashp: AshpOption, t_air: float) -> float:
    """Heat-pump coefficient of performance at ambient temperature ``t_air`` (C)."""
    p = ashp.cop_params
    return p.L / (1.0 + math.exp(-p.k * (t_air - p.x0))) + p.b


def evaluate_capacity(ashp: AshpOption, t_air: float) -> float:
    """Maximum heat output (kW) at ambient temperature ``t_air`` (C)."""
    p = ashp.cap_params
    return p.a * t_air ** 3 + p.b * t_air ** 2 + p.c * t_air + p.d


def crf(rate: float, lifetime: int) -> float:
    """
    Capital recovery factor.

    Args:
        rate: Interest rate per year (fraction, >= 0)
        lifetime: Number of years (>= 1)

    Returns:
        Annualisation factor; 1/lifetime in the zero-rate limit.
    """
    if lifetime < 1:
        raise CatalogError("lifetime must be >= 1")
    if rate < 0:
        raise CatalogError("rate must be >= 0")
    if rate == 0:
        return 1.0 / lifetime
    growth = (1.0 + rate) ** lifetime
    return rate * growth / (growth - 1.0)


def _validate_catalog(catalog: TechnologyCatalog) -> None:
    for p in catalog.ashps:
        if p.unit_cost <= 0 or p.install_cost < 0:
            raise CatalogError(f"ASHP {p.label}: unit_cost must be > 0 and install_cost >= 0")
        # Below t_min the unit is switched off, so the curves are only checked above it
        lo = max(CURVE_CHECK_RANGE_C[0], p.t_min)
        hi = CURVE_CHECK_RANGE_C[1]
        samples = [lo + (hi - lo) * n / 120 for n in range(121)]
        for t in samples:
            if evaluate_cop(p, t) <= 0:
                raise CatalogError(f"ASHP {p.label}: COP not positive at {t:.1f} C")
            if evaluate_capacity(p, t) <= 0:
                raise CatalogError(f"ASHP {p.label}: capacity not positive at {t:.1f} C")

    for k in catalog.tanks:
        if k.volume <= 0:
            raise CatalogError(f"Tank {k.label}: volume must be > 0")
        if not (0 < k.eta_ch <= 1 and 0 < k.eta_disch <= 1):
            raise CatalogError(f"Tank {k.label}: efficiencies must lie in (0, 1]")
        if k.t_min >= catalog.supply_temperature:
            raise CatalogError(f"Tank {k.label}: t_min must be below the supply temperature")

    for b in catalog.boilers:
        if b.h_max <= 0 or not 0 < b.efficiency <= 1:
            raise CatalogError(f"Boiler {b.label}: h_max > 0 and efficiency in (0, 1] required")

    for c in catalog.batteries:
        if c.capacity <= 0 or c.max_power <= 0:
            raise CatalogError(f"Battery {c.label}: capacity and max_power must be > 0")
        if not (0 < c.max_dod <= 1 and 0 < c.max_soc <= 1) or c.max_dod > c.max_soc:
            raise CatalogError(f"Battery {c.label}: need 0 < max_dod <= max_soc <= 1")
        if not (0 < c.eta_ch <= 1 and 0 < c.eta_disch <= 1):
            raise CatalogError(f"Battery {c.label}: efficiencies must lie in (0, 1]")

    ashp_labels = {p.label for p in catalog.ashps}
    tank_labels = {k.label for k in catalog.tanks}
    for (p, k), cost in catalog.compatibility.costs.items():
        if p not in ashp_labels or k not in tank_labels:
            raise CatalogError(f"Compatibility entry ({p}, {k}) references an unknown device")
        if cost is None or cost <= 0:
            raise CatalogError(f"Compatibility entry ({p}, {k}) must carry a positive cost")


def _require(entry: dict, key: str, where: str):
    if key not in entry:
        raise CatalogError(f"{where}: missing field '{key}'")
    return entry[key]


def _parse_ashp(entry: dict, where: str) -> AshpOption:
    cop = _require(entry, "cop", where)
    cap = _require(entry, "capacity", where)
    try:
        return AshpOption(
            label=str(_require(entry, "label", where)),
            t_min=float(_require(entry, "t_min_c", where)),
            unit_cost=float(_require(entry, "unit_cost", where)),
            install_cost=float(_require(entry, "install_cost", where)),
            cop_params=CopParams(**{k: float(cop[k]) for k in ("L", "x0", "k", "b")}),
            # A blank coefficient in the source table reads as zero
            cap_params=CapacityParams(**{k: float(cap.get(k) or 0.0) for k in ("a", "b", "c", "d")}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CatalogError(f"{where}: {e}") from e


def _parse_options(entries: list, factory, fields: dict[str, str], kind: str) -> tuple:
    options = []
    for n, entry in enumerate(entries):
        where = f"{kind}[{n}]"
        values = {}
        for attr, key in fields.items():
            raw = _require(entry, key, where)
            values[attr] = str(raw) if attr == "label" else float(raw)
        options.append(factory(**values))
    return tuple(options)


def catalog_from_dict(doc: dict, source: str = "<catalog>") -> TechnologyCatalog:
    """Build a catalog from its JSON document, defaulting economics to built-in values."""
    try:
        ashps = tuple(
            _parse_ashp(entry, f"{source}: ashps[{n}]")
            for n, entry in enumerate(doc.get("ashps", []))
        )
        tanks = _parse_options(doc.get("tanks", []), TankOption, {
            "label": "label", "volume": "volume_m3", "eta_ch": "eta_ch",
            "eta_disch": "eta_disch", "t_min": "t_min_c", "heat_loss": "heat_loss_kw",
        }, f"{source}: tanks")
        boilers = _parse_options(doc.get("boilers", []), BoilerOption, {
            "label": "label", "h_max": "h_max_kw", "efficiency": "efficiency",
            "unit_cost": "unit_cost", "install_cost": "install_cost",
        }, f"{source}: boilers")
        batteries = _parse_options(doc.get("batteries", []), BatteryOption, {
            "label": "label", "capacity": "capacity_kwh", "max_dod": "max_dod",
            "max_soc": "max_soc", "unit_cost": "unit_cost", "install_cost": "install_cost",
            "annual_op_cost": "annual_op_cost", "eta_ch": "eta_ch",
            "eta_disch": "eta_disch", "max_power": "max_power_kw",
        }, f"{source}: batteries")
    except (TypeError, ValueError) as e:
        if isinstance(e, CatalogError):
            raise
        raise CatalogError(f"{source}: {e}") from e

    costs = {}
    for ashp_label, row in doc.get("compatibility", {}).items():
        for tank_label, cost in row.items():
            # null marks an infeasible pair
            if cost is not None:
                costs[(ashp_label, tank_label)] = float(cost)

    economics_doc = doc.get("economics")
    if economics_doc is None:
        economics = _builtin_document_economics()
    else:
        known = EconomicScalars.__dataclass_fields__
        unknown = set(economics_doc) - set(known)
        if unknown:
            raise CatalogError(f"{source}: unknown economics fields {sorted(unknown)}")
        economics = EconomicScalars(**economics_doc)

    supply = doc.get("supply_temperature_c")
    if supply is None:
        supply = 55.0

    return TechnologyCatalog(
        ashps=ashps,
        tanks=tanks,
        compatibility=AshpTankCompatibility(costs),
        boilers=boilers,
        batteries=batteries,
        economics=economics,
        supply_temperature=float(supply),
        name=str(doc.get("name", source)),
    )


def _builtin_document_economics() -> EconomicScalars:
    doc = json.loads(BUILTIN_CATALOG.read_text(encoding="utf-8"))
    return EconomicScalars(**doc["economics"])


def load_catalog(path: Path) -> TechnologyCatalog:
    """
    Load a catalog document from disk.

    Args:
        path: JSON catalog file

    Returns:
        Validated TechnologyCatalog

    Raises:
        CatalogError: If the file is missing, not JSON, or inconsistent
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"Catalog file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CatalogError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return catalog_from_dict(doc, source=str(path))


def load_builtin_catalog() -> TechnologyCatalog:
    """Load the full built-in dataset (4 ASHPs, 4 tanks, 4 boilers, 3 batteries)."""
    return load_catalog(BUILTIN_CATALOG)


def catalog_to_dict(catalog: TechnologyCatalog) -> dict:
    """Inverse of ``catalog_from_dict``; used when writing scenario bundles."""
    compatibility: dict[str, dict[str, Optional[float]]] = {
        p.label: {k.label: catalog.compatibility.cost(p.label, k.label) for k in catalog.tanks}
        for p in catalog.ashps
    }
    return {
        "name": catalog.name,
        "supply_temperature_c": catalog.supply_temperature,
        "ashps": [
            {
                "label": p.label, "t_min_c": p.t_min, "unit_cost": p.unit_cost,
                "install_cost": p.install_cost,
                "cop": {"L": p.cop_params.L, "x0": p.cop_params.x0, "k": p.cop_params.k, "b": p.cop_params.b},
                "capacity": {"a": p.cap_params.a, "b": p.cap_params.b, "c": p.cap_params.c, "d": p.cap_params.d},
            }
            for p in catalog.ashps
        ],
        "tanks": [
            {"label": k.label, "volume_m3": k.volume, "eta_ch": k.eta_ch, "eta_disch": k.eta_disch,
             "t_min_c": k.t_min, "heat_loss_kw": k.heat_loss}
            for k in catalog.tanks
        ],
        "compatibility": compatibility,
        "boilers": [
            {"label": b.label, "h_max_kw": b.h_max, "efficiency": b.efficiency,
             "unit_cost": b.unit_cost, "install_cost": b.install_cost}
            for b in catalog.boilers
        ],
        "batteries": [
            {"label": c.label, "capacity_kwh": c.capacity, "max_dod": c.max_dod, "max_soc": c.max_soc,
             "unit_cost": c.unit_cost, "install_cost": c.install_cost, "annual_op_cost": c.annual_op_cost,
             "eta_ch": c.eta_ch, "eta_disch": c.eta_disch, "max_power_kw": c.max_power}
            for c in catalog.batteries
        ],
        "economics": {name: getattr(catalog.economics, name) for name in EconomicScalars.__dataclass_fields__},
    }
