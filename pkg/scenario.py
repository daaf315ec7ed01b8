"""
Scenario Ingestion
==================

Reads a scenario bundle (a manifest plus CSV/JSON tables) into a validated,
immutable Scenario: network topology, dwellings, seasonal weather, tariffs and
algorithm settings. Demand series are materialised as peak x normalised shape
x seasonal scaling.
"""

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import networkx as nx
import numpy as np
import pandas as pd

from catalog import (
    CATALOG_DIR,
    DATA_DIR,
    CatalogError,
    EconomicScalars,
    TechnologyCatalog,
    catalog_to_dict,
    load_builtin_catalog,
    load_catalog,
)
from settings import (
    AlgorithmSettings,
    SettingsError,
    default_settings,
    settings_from_dict,
    settings_to_dict,
)


PHASES = ("a", "b", "c")

FIXTURES_DIR = DATA_DIR / "fixtures"
PROFILE_SHAPES_FILE = DATA_DIR / "profile_shapes.json"

DEFAULT_V_MIN = 0.94
DEFAULT_V_MAX = 1.10

# Economy 7 night window (start hour inclusive, end hour exclusive)
NIGHT_WINDOW = (0.0, 7.0)

DAYS_PER_YEAR = 365
SHAPE_PEAK_TOLERANCE = 1e-6

# Demand scaling relative to the winter peaks when seasons.csv leaves it out: (elec, heat)
SEASON_SCALES = {
    "winter": (1.0, 1.0),
    "spring": (0.9, 0.6),
    "autumn": (0.9, 0.6),
    "summer": (0.8, 0.2),
}


class ScenarioError(ValueError):
    """
    Raised for any invalid scenario input.

    Carries the offending file, 1-based line number (header is line 1) and
    field name when they are known.
    """

    def __init__(self, message: str, path: Optional[Path] = None,
                 line: Optional[int] = None, field_name: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field_name
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field '{field_name}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...]
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX
    is_slack: bool = False


@dataclass(frozen=True)
class Line:
    """Multiphase line section; per-km parameters, impedance matrix derived."""

    from_bus: str
    to_bus: str
    phases: tuple[str, ...]
    length: float  # m
    r_self: float  # ohm/km
    x_self: float
    r_mutual: float = 0.0
    x_mutual: float = 0.0
    b_shunt: float = 0.0  # uS/km, split evenly over both ends

    @property
    def impedance(self) -> np.ndarray:
        """Series impedance matrix (ohm), |phases| x |phases|, symmetric."""
        n = len(self.phases)
        km = self.length / 1000.0
        z = np.full((n, n), complex(self.r_mutual, self.x_mutual) * km)
        np.fill_diagonal(z, complex(self.r_self, self.x_self) * km)
        return z

    @property
    def shunt(self) -> np.ndarray:
        """Total shunt admittance matrix (S)."""
        n = len(self.phases)
        return np.eye(n) * 1j * self.b_shunt * 1e-6 * self.length / 1000.0


@dataclass(frozen=True)
class Transformer:
    from_bus: str
    to_bus: str
    connection: str = "delta-wye"
    phase_shift: float = -30.0  # degrees, secondary relative to primary
    r: float = 0.0  # ohm, referred to the secondary
    x: float = 0.0
    rating: float = 800.0  # kVA

    @property
    def series_impedance(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class Dwelling:
    id: str
    bus: str
    phase: str
    peak_elec: float  # kW
    peak_heat: float  # kW
    max_pv_area: float  # m2
    power_factor: float = 1.0

    @property
    def tan_phi(self) -> float:
        return math.tan(math.acos(self.power_factor))


@dataclass(frozen=True)
class SeasonProfile:
    id: str
    n_days: float
    timestep: float  # hours
    hours: tuple[float, ...]
    t_air: tuple[float, ...]
    irradiance: tuple[float, ...]
    elec_shape: tuple[float, ...]
    heat_shape: tuple[float, ...]
    elec_scale: float = 1.0
    heat_scale: float = 1.0

    @property
    def n_steps(self) -> int:
        return len(self.t_air)


@dataclass(frozen=True)
class DemandSeries:
    elec: np.ndarray
    heat: np.ndarray


@dataclass(frozen=True)
class NetworkData:
    """The electrical part of a scenario, enough to assemble a Y-bus."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    base_kva: float = 100.0
    v_ll: float = 400.0

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.is_slack)

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def nodes(self) -> list[tuple[str, str]]:
        """All (bus, phase) pairs in Y-bus order."""
        return [(b.id, ph) for b in self.buses for ph in b.phases]

    @property
    def v_base(self) -> float:
        """Phase-to-neutral base voltage (V)."""
        return self.v_ll / math.sqrt(3.0)

    @property
    def z_base(self) -> float:
        return base_impedance(self.v_ll, self.base_kva)


def base_impedance(v_ll: float, base_kva: float) -> float:
    """Per-phase base impedance (ohm) for a line-to-line voltage and per-phase base power."""
    v_phase = v_ll / math.sqrt(3.0)
    return v_phase ** 2 / (base_kva * 1000.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    dwellings: tuple[Dwelling, ...]
    seasons: tuple[SeasonProfile, ...]
    catalog: TechnologyCatalog
    tariffs: EconomicScalars
    settings: AlgorithmSettings
    base_kva: float = 100.0
    v_ll: float = 400.0
    demand: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        validate_scenario(self)
        object.__setattr__(self, "demand", {
            (d.id, s.id): synthesize_profiles(d, s)
            for d in self.dwellings
            for s in self.seasons
        })

    @property
    def network(self) -> NetworkData:
        return NetworkData(self.buses, self.lines, self.transformers, self.base_kva, self.v_ll)

    @property
    def n_steps(self) -> int:
        return self.seasons[0].n_steps

    def dwelling(self, dwelling_id: str) -> Dwelling:
        for d in self.dwellings:
            if d.id == dwelling_id:
                return d
        raise KeyError(dwelling_id)

    def season(self, season_id: str) -> SeasonProfile:
        for s in self.seasons:
            if s.id == season_id:
                return s
        raise KeyError(season_id)

    def tariff_series(self, season_id: str) -> np.ndarray:
        """Import price per time step (day/night split)."""
        season = self.season(season_id)
        night_start, night_end = NIGHT_WINDOW
        return np.array([
            self.tariffs.night_tariff if night_start <= h % 24 < night_end else self.tariffs.day_tariff
            for h in season.hours
        ])

    def with_changes(self, **changes: Any) -> "Scenario":
        """Copy with fields replaced; demand is re-materialised and re-validated."""
        if "tariffs" in changes and "catalog" not in changes:
            changes["catalog"] = replace(self.catalog, economics=changes["tariffs"])
        return replace(self, **changes)


def _gaussian_shape(params: dict, hours: Iterable[float]) -> np.ndarray:
    values = np.full(len(list(hours)), float(params.get("base", 0.0)))
    hours = np.asarray(list(hours), dtype=float)
    for peak in params.get("peaks", []):
        values = values + peak["amp"] * np.exp(-((hours - peak["hour"]) ** 2) / (2.0 * peak["width"] ** 2))
    return values / values.max()


def default_shapes(season_id: str, hours: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """
    Shipped double-peak (morning/evening) shapes for a season.

    Unknown season ids fall back to the file's ``fallback`` season.
    """
    doc = json.loads(PROFILE_SHAPES_FILE.read_text(encoding="utf-8"))
    hours = list(hours)
    shapes = []
    for kind in ("elec", "heat"):
        table = doc[kind]
        params = table.get(season_id) or table[doc.get("fallback", "winter")]
        shapes.append(_gaussian_shape(params, hours))
    return shapes[0], shapes[1]


def synthesize_profiles(dwelling: Dwelling, season: SeasonProfile) -> DemandSeries:
    """Electric and heat demand (kW) per time step: peak x shape x seasonal scaling."""
    elec = dwelling.peak_elec * season.elec_scale * np.asarray(season.elec_shape, dtype=float)
    heat = dwelling.peak_heat * season.heat_scale * np.asarray(season.heat_shape, dtype=float)
    return DemandSeries(elec=elec, heat=heat)


def isolated_nodes(network: NetworkData) -> list[tuple[str, str]]:
    """Bus-phases with no electrical path to the slack bus."""
    graph = nx.Graph()
    graph.add_nodes_from(network.nodes())
    for line in network.lines:
        for ph in line.phases:
            graph.add_edge((line.from_bus, ph), (line.to_bus, ph))
    for tx in network.transformers:
        for ph in network.bus(tx.to_bus).phases:
            graph.add_edge((tx.from_bus, ph), (tx.to_bus, ph))

    slack = network.slack
    reached = set()
    for ph in slack.phases:
        reached |= nx.node_connected_component(graph, (slack.id, ph))
    return [node for node in network.nodes() if node not in reached]


def _check_topology(network: NetworkData) -> None:
    graph = nx.Graph()
    graph.add_nodes_from(b.id for b in network.buses)
    graph.add_edges_from((l.from_bus, l.to_bus) for l in network.lines)
    graph.add_edges_from((t.from_bus, t.to_bus) for t in network.transformers)
    if not nx.is_connected(graph):
        reached = nx.node_connected_component(graph, network.slack.id)
        missing = sorted(set(graph.nodes) - reached)
        raise ScenarioError(f"disconnected network: {', '.join(missing)} unreachable from slack")

    isolated = isolated_nodes(network)
    if isolated:
        names = ", ".join(f"{b}.{ph}" for b, ph in isolated)
        raise ScenarioError(f"isolated bus-phases (no path to slack): {names}")


def validate_scenario(scenario: Scenario) -> None:
    """Cross-reference and invariant checks shared by parsing and ``with_changes``."""
    bus_ids = [b.id for b in scenario.buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise ScenarioError("duplicate bus ids")
    buses = {b.id: b for b in scenario.buses}

    slack = [b for b in scenario.buses if b.is_slack]
    if len(slack) != 1:
        raise ScenarioError(f"exactly one slack bus required, found {len(slack)}")
    for b in scenario.buses:
        if not b.phases or set(b.phases) - set(PHASES):
            raise ScenarioError(f"bus {b.id}: phases must be a non-empty subset of abc")
        if not 0 < b.v_min < b.v_max:
            raise ScenarioError(f"bus {b.id}: need 0 < v_min < v_max")

    for line in scenario.lines:
        for end in (line.from_bus, line.to_bus):
            if end not in buses:
                raise ScenarioError(f"line {line.from_bus}-{line.to_bus}: unknown bus {end!r}")
            if set(line.phases) - set(buses[end].phases):
                raise ScenarioError(f"line {line.from_bus}-{line.to_bus}: phases not present at bus {end}")
        if line.r_self <= 0 or line.length <= 0:
            raise ScenarioError(f"line {line.from_bus}-{line.to_bus}: resistance and length must be > 0")

    for tx in scenario.transformers:
        for end in (tx.from_bus, tx.to_bus):
            if end not in buses:
                raise ScenarioError(f"transformer {tx.from_bus}-{tx.to_bus}: unknown bus {end!r}")
        if buses[tx.from_bus].phases != buses[tx.to_bus].phases:
            raise ScenarioError(f"transformer {tx.from_bus}-{tx.to_bus}: both sides must carry the same phases")
        if tx.connection not in ("delta-wye", "wye-wye"):
            raise ScenarioError(f"transformer {tx.from_bus}-{tx.to_bus}: unsupported connection {tx.connection!r}")
        if tx.rating <= 0:
            raise ScenarioError(f"transformer {tx.from_bus}-{tx.to_bus}: rating must be > 0")

    _check_topology(scenario.network)

    dwelling_ids = [d.id for d in scenario.dwellings]
    if len(set(dwelling_ids)) != len(dwelling_ids):
        raise ScenarioError("duplicate dwelling ids")
    for d in scenario.dwellings:
        if d.bus not in buses:
            raise ScenarioError(f"dwelling {d.id}: unknown bus {d.bus!r}")
        if d.phase not in buses[d.bus].phases:
            raise ScenarioError(f"dwelling {d.id}: phase {d.phase} not present at bus {d.bus}")
        if d.peak_elec <= 0 or d.peak_heat <= 0:
            raise ScenarioError(f"dwelling {d.id}: peak demands must be > 0")
        if d.max_pv_area < 0:
            raise ScenarioError(f"dwelling {d.id}: max_pv_area must be >= 0")
        if not 0 < d.power_factor <= 1:
            raise ScenarioError(f"dwelling {d.id}: power_factor must lie in (0, 1]")

    if not scenario.seasons:
        raise ScenarioError("at least one season is required")
    total_days = sum(s.n_days for s in scenario.seasons)
    if abs(total_days - DAYS_PER_YEAR) > 1e-9:
        raise ScenarioError(f"season days sum to {total_days:g}, expected {DAYS_PER_YEAR}")
    lengths = {s.n_steps for s in scenario.seasons}
    if len(lengths) != 1:
        raise ScenarioError("all seasons must have the same number of time steps")
    for s in scenario.seasons:
        series = (s.hours, s.irradiance, s.elec_shape, s.heat_shape)
        if any(len(x) != s.n_steps for x in series):
            raise ScenarioError(f"season {s.id}: series lengths differ")
        for name in ("elec_shape", "heat_shape"):
            shape = getattr(s, name)
            if min(shape) < 0 or max(shape) != 1.0:
                raise ScenarioError(f"season {s.id}: {name} must lie in [0, 1] with maximum 1")
        if s.elec_scale < 0 or s.heat_scale < 0:
            raise ScenarioError(f"season {s.id}: scaling factors must be >= 0")
        if min(s.irradiance) < 0:
            raise ScenarioError(f"season {s.id}: irradiance must be >= 0")
        if s.timestep <= 0 or s.n_days <= 0:
            raise ScenarioError(f"season {s.id}: timestep and n_days must be > 0")

    if scenario.catalog.is_empty:
        raise ScenarioError("catalog has no devices")


def _read_table(path: Path, required: list[str], optional: Optional[dict[str, Any]] = None) -> pd.DataFrame:
    if not path.exists():
        raise ScenarioError("file not found", path)
    try:
        frame = pd.read_csv(path, dtype={"id": str, "bus": str, "from_bus": str, "to_bus": str,
                                         "phases": str, "phase": str, "season": str},
                            float_precision="round_trip", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ScenarioError(f"unreadable CSV ({e})", path) from e

    for column in required:
        if column not in frame.columns:
            raise ScenarioError("missing column", path, line=1, field_name=column)
    for column, default in (optional or {}).items():
        if column not in frame.columns:
            frame[column] = default
    for column in required:
        missing = frame[column].isna()
        if missing.any():
            row = int(np.flatnonzero(missing.to_numpy())[0])
            raise ScenarioError("empty value", path, line=row + 2, field_name=column)
    return frame


def _cell(row: pd.Series, column: str, path: Path, line: int, kind=float):
    value = row[column]
    try:
        if kind is bool:
            text = str(value).strip().lower()
            if text in ("1", "1.0", "true", "yes"):
                return True
            if text in ("0", "0.0", "false", "no", "", "nan"):
                return False
            raise ValueError(value)
        if kind is str:
            return str(value).strip()
        result = float(value)
        if math.isnan(result):
            raise ValueError(value)
        return result
    except (TypeError, ValueError):
        raise ScenarioError(f"invalid value {value!r}", path, line=line, field_name=column) from None


def _phases(text: str, path: Path, line: int, column: str) -> tuple[str, ...]:
    phases = tuple(ch for ch in str(text).strip().lower())
    if not phases or set(phases) - set(PHASES) or len(set(phases)) != len(phases):
        raise ScenarioError(f"invalid phase set {text!r}", path, line=line, field_name=column)
    return tuple(ph for ph in PHASES if ph in phases)


def _parse_buses(path: Path) -> tuple[Bus, ...]:
    frame = _read_table(path, ["id", "phases"],
                        {"v_min_pu": DEFAULT_V_MIN, "v_max_pu": DEFAULT_V_MAX, "is_slack": 0})
    buses = []
    for n, row in frame.iterrows():
        line = n + 2
        buses.append(Bus(
            id=_cell(row, "id", path, line, str),
            phases=_phases(row["phases"], path, line, "phases"),
            v_min=_cell(row, "v_min_pu", path, line),
            v_max=_cell(row, "v_max_pu", path, line),
            is_slack=_cell(row, "is_slack", path, line, bool),
        ))
    return tuple(buses)


def _parse_lines(path: Path) -> tuple[Line, ...]:
    required = ["from_bus", "to_bus", "phases", "length_m", "r_self_ohm_per_km", "x_self_ohm_per_km"]
    frame = _read_table(path, required, {
        "r_mutual_ohm_per_km": 0.0, "x_mutual_ohm_per_km": 0.0, "b_shunt_us_per_km": 0.0,
    })
    lines = []
    for n, row in frame.iterrows():
        line = n + 2
        lines.append(Line(
            from_bus=_cell(row, "from_bus", path, line, str),
            to_bus=_cell(row, "to_bus", path, line, str),
            phases=_phases(row["phases"], path, line, "phases"),
            length=_cell(row, "length_m", path, line),
            r_self=_cell(row, "r_self_ohm_per_km", path, line),
            x_self=_cell(row, "x_self_ohm_per_km", path, line),
            r_mutual=_cell(row, "r_mutual_ohm_per_km", path, line),
            x_mutual=_cell(row, "x_mutual_ohm_per_km", path, line),
            b_shunt=_cell(row, "b_shunt_us_per_km", path, line),
        ))
    return tuple(lines)


def _parse_transformers(path: Path) -> tuple[Transformer, ...]:
    frame = _read_table(path, ["from_bus", "to_bus", "r_ohm", "x_ohm", "rating_kva"],
                        {"connection": "delta-wye", "phase_shift_deg": -30.0})
    transformers = []
    for n, row in frame.iterrows():
        line = n + 2
        transformers.append(Transformer(
            from_bus=_cell(row, "from_bus", path, line, str),
            to_bus=_cell(row, "to_bus", path, line, str),
            connection=_cell(row, "connection", path, line, str).lower(),
            phase_shift=_cell(row, "phase_shift_deg", path, line),
            r=_cell(row, "r_ohm", path, line),
            x=_cell(row, "x_ohm", path, line),
            rating=_cell(row, "rating_kva", path, line),
        ))
    return tuple(transformers)


def _parse_dwellings(path: Path, known_buses: dict[str, Bus]) -> tuple[Dwelling, ...]:
    frame = _read_table(path, ["id", "bus", "phase", "peak_elec_kw", "peak_heat_kw", "max_pv_area_m2"],
                        {"power_factor": 1.0})
    dwellings = []
    for n, row in frame.iterrows():
        line = n + 2
        bus = _cell(row, "bus", path, line, str)
        if bus not in known_buses:
            raise ScenarioError(f"dangling reference to bus {bus!r}", path, line=line, field_name="bus")
        phase = _cell(row, "phase", path, line, str).lower()
        if phase not in known_buses[bus].phases:
            raise ScenarioError(f"phase {phase!r} not present at bus {bus}", path, line=line, field_name="phase")
        dwelling = Dwelling(
            id=_cell(row, "id", path, line, str),
            bus=bus,
            phase=phase,
            peak_elec=_cell(row, "peak_elec_kw", path, line),
            peak_heat=_cell(row, "peak_heat_kw", path, line),
            max_pv_area=_cell(row, "max_pv_area_m2", path, line),
            power_factor=_cell(row, "power_factor", path, line),
        )
        for column, value in (("peak_elec_kw", dwelling.peak_elec), ("peak_heat_kw", dwelling.peak_heat)):
            if value <= 0:
                raise ScenarioError("must be > 0", path, line=line, field_name=column)
        dwellings.append(dwelling)
    return tuple(dwellings)


def _normalised(values: np.ndarray, path: Path, column: str, season: str) -> tuple[float, ...]:
    peak = values.max()
    if values.min() < 0 or abs(peak - 1.0) > SHAPE_PEAK_TOLERANCE:
        raise ScenarioError(f"season {season}: shape must lie in [0, 1] with maximum 1", path, field_name=column)
    return tuple(float(v) for v in values / peak)


def season_scales(season_id: str) -> tuple[float, float]:
    """Default (elec_scale, heat_scale) of a season; unknown ids get (1.0, 1.0)."""
    return SEASON_SCALES.get(season_id.lower(), (1.0, 1.0))


def _parse_seasons(seasons_path: Path, weather_path: Path) -> tuple[SeasonProfile, ...]:
    meta = _read_table(seasons_path, ["season", "n_days", "timestep_h"],
                       {"elec_scale": np.nan, "heat_scale": np.nan})
    weather = _read_table(weather_path, ["season", "hour", "t_air_c", "irradiance_kw_m2"])
    has_shapes = {"elec_shape", "heat_shape"} <= set(weather.columns)

    seasons = []
    for n, row in meta.iterrows():
        line = n + 2
        season_id = _cell(row, "season", seasons_path, line, str)
        rows = weather[weather["season"] == season_id].sort_values("hour")
        if rows.empty:
            raise ScenarioError(f"no weather rows for season {season_id!r}", weather_path, field_name="season")
        hours = tuple(float(h) for h in rows["hour"])
        if has_shapes:
            elec_shape = _normalised(rows["elec_shape"].to_numpy(float), weather_path, "elec_shape", season_id)
            heat_shape = _normalised(rows["heat_shape"].to_numpy(float), weather_path, "heat_shape", season_id)
        else:
            elec, heat = default_shapes(season_id, hours)
            elec_shape = tuple(float(v) for v in elec)
            heat_shape = tuple(float(v) for v in heat)
        elec_scale, heat_scale = season_scales(season_id)
        if not pd.isna(row["elec_scale"]):
            elec_scale = _cell(row, "elec_scale", seasons_path, line)
        if not pd.isna(row["heat_scale"]):
            heat_scale = _cell(row, "heat_scale", seasons_path, line)
        seasons.append(SeasonProfile(
            id=season_id,
            n_days=_cell(row, "n_days", seasons_path, line),
            timestep=_cell(row, "timestep_h", seasons_path, line),
            hours=hours,
            t_air=tuple(float(v) for v in rows["t_air_c"]),
            irradiance=tuple(float(v) for v in rows["irradiance_kw_m2"]),
            elec_shape=elec_shape,
            heat_shape=heat_shape,
            elec_scale=elec_scale,
            heat_scale=heat_scale,
        ))

    total_days = sum(s.n_days for s in seasons)
    if abs(total_days - DAYS_PER_YEAR) > 1e-9:
        raise ScenarioError(f"season days sum to {total_days:g}, expected {DAYS_PER_YEAR}",
                            seasons_path, field_name="n_days")
    return tuple(seasons)


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise ScenarioError("file not found", path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e.msg}", path, line=e.lineno) from e


def resolve_catalog(source: Union[str, Path, TechnologyCatalog, None], base_dir: Path) -> TechnologyCatalog:
    """
    Resolve a catalog reference.

    Accepts a loaded catalog, ``"builtin"``, the name of a shipped catalog in
    ``data/catalogs`` or a path relative to ``base_dir``.
    """
    if isinstance(source, TechnologyCatalog):
        return source
    if source is None or source == "builtin":
        return load_builtin_catalog()
    shipped = CATALOG_DIR / f"{source}.json"
    if isinstance(source, str) and shipped.exists():
        return load_catalog(shipped)
    path = Path(source)
    if not path.is_absolute():
        path = base_dir / path
    return load_catalog(path)


def parse_scenario(manifest: Union[str, Path],
                   catalog: Union[str, Path, TechnologyCatalog, None] = None,
                   settings: Optional[AlgorithmSettings] = None) -> Scenario:
    """
    Parse and validate a scenario bundle.

    Args:
        manifest: ``manifest.json`` path, or the directory holding it
        catalog: Optional catalog override (name, path or loaded catalog)
        settings: Optional base settings; the bundle's ``settings.json`` is
            applied on top of them

    Returns:
        Fully validated Scenario

    Raises:
        ScenarioError: schema violation, dangling reference, disconnected
            network, or season-day sum different from 365
    """
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / "manifest.json"
    doc = _read_json(manifest)
    base_dir = manifest.parent

    files = doc.get("files", {})
    for key in ("buses", "lines", "transformers", "dwellings", "seasons", "weather"):
        if key not in files:
            raise ScenarioError("missing file entry", manifest, field_name=f"files.{key}")

    def path_of(key: str) -> Path:
        return base_dir / files[key]

    buses = _parse_buses(path_of("buses"))
    known = {b.id: b for b in buses}
    lines = _parse_lines(path_of("lines"))
    for n, line in enumerate(lines):
        for end, column in ((line.from_bus, "from_bus"), (line.to_bus, "to_bus")):
            if end not in known:
                raise ScenarioError(f"dangling reference to bus {end!r}", path_of("lines"),
                                    line=n + 2, field_name=column)
    transformers = _parse_transformers(path_of("transformers"))
    for n, tx in enumerate(transformers):
        for end, column in ((tx.from_bus, "from_bus"), (tx.to_bus, "to_bus")):
            if end not in known:
                raise ScenarioError(f"dangling reference to bus {end!r}", path_of("transformers"),
                                    line=n + 2, field_name=column)
    dwellings = _parse_dwellings(path_of("dwellings"), known)
    seasons = _parse_seasons(path_of("seasons"), path_of("weather"))

    try:
        loaded = resolve_catalog(catalog if catalog is not None else doc.get("catalog"), base_dir)
    except CatalogError as e:
        raise ScenarioError(str(e), manifest, field_name="catalog") from e

    tariffs = loaded.economics
    if "tariffs" in files:
        overrides = _read_json(path_of("tariffs"))
        try:
            tariffs = replace(tariffs, **overrides)
        except (TypeError, CatalogError) as e:
            raise ScenarioError(str(e), path_of("tariffs")) from e

    run_settings = settings or default_settings()
    if "settings" in files:
        try:
            run_settings = settings_from_dict(_read_json(path_of("settings")), run_settings)
        except SettingsError as e:
            raise ScenarioError(str(e), path_of("settings")) from e

    try:
        restricted = loaded.restricted(run_settings.technologies)
    except CatalogError as e:
        raise ScenarioError(str(e), manifest, field_name="technologies") from e

    return Scenario(
        name=str(doc.get("name", base_dir.name)),
        buses=buses,
        lines=lines,
        transformers=transformers,
        dwellings=dwellings,
        seasons=seasons,
        catalog=replace(restricted, economics=tariffs),
        tariffs=tariffs,
        settings=run_settings,
        base_kva=float(doc.get("base_kva", 100.0)),
        v_ll=float(doc.get("v_ll", 400.0)),
    )


def write_scenario(scenario: Scenario, directory: Union[str, Path]) -> Path:
    """
    Serialise a scenario as a self-contained bundle.

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    pd.DataFrame([{
        "id": b.id, "phases": "".join(b.phases), "v_min_pu": b.v_min,
        "v_max_pu": b.v_max, "is_slack": int(b.is_slack),
    } for b in scenario.buses]).to_csv(directory / "buses.csv", index=False)

    pd.DataFrame([{
        "from_bus": l.from_bus, "to_bus": l.to_bus, "phases": "".join(l.phases),
        "length_m": l.length, "r_self_ohm_per_km": l.r_self, "x_self_ohm_per_km": l.x_self,
        "r_mutual_ohm_per_km": l.r_mutual, "x_mutual_ohm_per_km": l.x_mutual,
        "b_shunt_us_per_km": l.b_shunt,
    } for l in scenario.lines]).to_csv(directory / "lines.csv", index=False)

    pd.DataFrame([{
        "from_bus": t.from_bus, "to_bus": t.to_bus, "connection": t.connection,
        "phase_shift_deg": t.phase_shift, "r_ohm": t.r, "x_ohm": t.x, "rating_kva": t.rating,
    } for t in scenario.transformers],
        columns=["from_bus", "to_bus", "connection", "phase_shift_deg", "r_ohm", "x_ohm", "rating_kva"],
    ).to_csv(directory / "transformers.csv", index=False)

    pd.DataFrame([{
        "id": d.id, "bus": d.bus, "phase": d.phase, "peak_elec_kw": d.peak_elec,
        "peak_heat_kw": d.peak_heat, "max_pv_area_m2": d.max_pv_area, "power_factor": d.power_factor,
    } for d in scenario.dwellings]).to_csv(directory / "dwellings.csv", index=False)

    pd.DataFrame([{
        "season": s.id, "n_days": s.n_days, "timestep_h": s.timestep,
        "elec_scale": s.elec_scale, "heat_scale": s.heat_scale,
    } for s in scenario.seasons]).to_csv(directory / "seasons.csv", index=False)

    pd.DataFrame([{
        "season": s.id, "hour": s.hours[t], "t_air_c": s.t_air[t],
        "irradiance_kw_m2": s.irradiance[t], "elec_shape": s.elec_shape[t], "heat_shape": s.heat_shape[t],
    } for s in scenario.seasons for t in range(s.n_steps)]).to_csv(directory / "weather.csv", index=False)

    (directory / "catalog.json").write_text(json.dumps(catalog_to_dict(scenario.catalog), indent=2))
    (directory / "tariffs.json").write_text(json.dumps(
        {f.name: getattr(scenario.tariffs, f.name) for f in fields(EconomicScalars)}, indent=2))
    (directory / "settings.json").write_text(json.dumps(settings_to_dict(scenario.settings), indent=2))

    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({
        "name": scenario.name,
        "base_kva": scenario.base_kva,
        "v_ll": scenario.v_ll,
        "catalog": "catalog.json",
        "files": {
            "buses": "buses.csv", "lines": "lines.csv", "transformers": "transformers.csv",
            "dwellings": "dwellings.csv", "seasons": "seasons.csv", "weather": "weather.csv",
            "tariffs": "tariffs.json", "settings": "settings.json",
        },
    }, indent=2))
    return manifest


def list_fixtures() -> list[str]:
    return sorted(p.parent.name for p in FIXTURES_DIR.glob("*/manifest.json"))


def load_fixture(name: str,
                 catalog: Union[str, Path, TechnologyCatalog, None] = None,
                 settings: Optional[AlgorithmSettings] = None) -> Scenario:
    """Load a shipped fixture bundle from ``data/fixtures/<name>``."""
    manifest = FIXTURES_DIR / name / "manifest.json"
    if not manifest.exists():
        raise ScenarioError(f"unknown fixture {name!r}; available: {', '.join(list_fixtures())}")
    return parse_scenario(manifest, catalog=catalog, settings=settings)
