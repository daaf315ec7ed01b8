"""
Multiphase Power Flow
=====================

Per-phase bus admittance assembly for unbalanced LV feeders, a sparse Newton
power-flow oracle used for initialisation and post-optimisation audit, and
the rectangular-coordinate power-flow constraint block of the NLP.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd
import pyomo.environ as pyo
from scipy.sparse import csc_matrix, csr_matrix, hstack, vstack
from scipy.sparse.linalg import spsolve

from scenario import NetworkData, Scenario, isolated_nodes

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log, log_solve
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)

    def log_solve(name: str, status: str, duration_ms: float, detail: str = "") -> None:
        print(f"[{name}] {status} ({duration_ms:.0f}ms) {detail}")


# Balanced slack phasors, degrees
SLACK_ANGLES = {"a": 0.0, "b": -120.0, "c": 120.0}

DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_NEWTON_MAX_ITER = 30


class NetworkError(ValueError):
    """Raised for an isolated bus-phase or a dwelling on a missing phase."""


class PowerFlowError(RuntimeError):
    """Raised when the Newton oracle fails to converge."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} pu after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class BranchBlock:
    """Two-port admittance of one branch over its phases (pu)."""

    from_idx: np.ndarray
    to_idx: np.ndarray
    yff: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray


@dataclass(frozen=True, eq=False)
class AdmittanceModel:
    """Per-phase Y-bus in per-unit plus the slack reference."""

    nodes: tuple[tuple[str, str], ...]
    ybus: csr_matrix
    branches: tuple[BranchBlock, ...]
    slack: np.ndarray
    pq: np.ndarray
    slack_voltage: np.ndarray
    no_load: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray
    base_kva: float
    v_base: float

    @property
    def size(self) -> int:
        return len(self.nodes)

    def index(self, bus: str, phase: str) -> int:
        try:
            return self.nodes.index((bus, phase))
        except ValueError:
            raise NetworkError(f"phase {phase!r} does not exist at bus {bus!r}") from None


@dataclass
class NetworkState:
    """Converged complex voltages and net injections (pu) at every node."""

    voltages: np.ndarray
    power: np.ndarray
    residual: float
    iterations: int

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.voltages)


def _line_block(line, n_from: list[int], n_to: list[int], z_base: float) -> BranchBlock:
    y_series = np.linalg.inv(line.impedance / z_base)
    y_shunt = line.shunt * z_base / 2.0
    return BranchBlock(
        from_idx=np.array(n_from), to_idx=np.array(n_to),
        yff=y_series + y_shunt, yft=-y_series, ytf=-y_series, ytt=y_series + y_shunt,
    )


def _transformer_block(tx, n_from: list[int], n_to: list[int], z_base: float) -> BranchBlock:
    # Ideal phase-shifting ratio in series with the secondary-referred impedance;
    # at no load V_to = V_from * exp(j * phase_shift)
    y = 1.0 / (tx.series_impedance / z_base)
    tap = np.exp(-1j * math.radians(tx.phase_shift))
    eye = np.eye(len(n_from))
    return BranchBlock(
        from_idx=np.array(n_from), to_idx=np.array(n_to),
        yff=y * eye, yft=-y / np.conj(tap) * eye, ytf=-y / tap * eye, ytt=y * eye,
    )


def assemble_admittance(scenario_or_network: Any) -> AdmittanceModel:
    """
    Build the per-phase Y-bus of a network.

    Args:
        scenario_or_network: Scenario or NetworkData

    Returns:
        AdmittanceModel with the no-load voltage profile already solved

    Raises:
        NetworkError: If a bus-phase is not connected to the slack
    """
    network: NetworkData = getattr(scenario_or_network, "network", scenario_or_network)
    isolated = isolated_nodes(network)
    if isolated:
        raise NetworkError(f"isolated bus-phases: {', '.join(f'{b}.{p}' for b, p in isolated)}")

    nodes = tuple(network.nodes())
    position = {node: n for n, node in enumerate(nodes)}
    z_base = network.z_base

    blocks = []
    for line in network.lines:
        blocks.append(_line_block(
            line,
            [position[line.from_bus, ph] for ph in line.phases],
            [position[line.to_bus, ph] for ph in line.phases],
            z_base,
        ))
    for tx in network.transformers:
        phases = [ph for ph in network.bus(tx.to_bus).phases if ph in network.bus(tx.from_bus).phases]
        blocks.append(_transformer_block(
            tx,
            [position[tx.from_bus, ph] for ph in phases],
            [position[tx.to_bus, ph] for ph in phases],
            z_base,
        ))

    n = len(nodes)
    rows, cols, vals = [], [], []
    for b in blocks:
        for idx_r, idx_c, mat in ((b.from_idx, b.from_idx, b.yff), (b.from_idx, b.to_idx, b.yft),
                                  (b.to_idx, b.from_idx, b.ytf), (b.to_idx, b.to_idx, b.ytt)):
            r, c = np.meshgrid(idx_r, idx_c, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(mat.ravel())
    ybus = csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n), dtype=complex)

    slack_bus = network.slack.id
    slack = np.array([k for k, (bus, _) in enumerate(nodes) if bus == slack_bus])
    pq = np.array([k for k, (bus, _) in enumerate(nodes) if bus != slack_bus])
    slack_voltage = np.array([np.exp(1j * math.radians(SLACK_ANGLES[nodes[k][1]])) for k in slack])

    no_load = np.zeros(n, dtype=complex)
    no_load[slack] = slack_voltage
    if len(pq):
        y_pq = ybus[pq][:, pq].tocsc()
        y_ps = ybus[pq][:, slack]
        no_load[pq] = spsolve(y_pq, -(y_ps @ slack_voltage))

    buses = {b.id: b for b in network.buses}
    return AdmittanceModel(
        nodes=nodes,
        ybus=ybus,
        branches=tuple(blocks),
        slack=slack,
        pq=pq,
        slack_voltage=slack_voltage,
        no_load=no_load,
        v_min=np.array([buses[b].v_min for b, _ in nodes]),
        v_max=np.array([buses[b].v_max for b, _ in nodes]),
        base_kva=network.base_kva,
        v_base=network.v_base,
    )


def _jacobian(ybus: csr_matrix, v: np.ndarray, pq: np.ndarray) -> csr_matrix:
    ib = range(len(v))
    ibus = ybus @ v
    diag_v = csc_matrix((v, (ib, ib)))
    diag_i = csc_matrix((ibus, (ib, ib)))
    diag_vnorm = csc_matrix((v / np.abs(v), (ib, ib)))

    ds_dvm = diag_v @ (ybus @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm
    ds_dva = 1j * diag_v @ (diag_i - ybus @ diag_v).conj()

    ds_dvm = ds_dvm.tocsr()[pq][:, pq]
    ds_dva = ds_dva.tocsr()[pq][:, pq]
    return vstack([hstack([ds_dva.real, ds_dvm.real]),
                   hstack([ds_dva.imag, ds_dvm.imag])], format="csc")


def newton_power_flow(model: AdmittanceModel, injections: np.ndarray,
                      tol: float = DEFAULT_NEWTON_TOL,
                      max_iter: int = DEFAULT_NEWTON_MAX_ITER,
                      v0: Optional[np.ndarray] = None) -> NetworkState:
    """
    Solve the power flow for given net injections.

    Every non-slack node is a PQ node; slack voltages are fixed.

    Args:
        model: Network admittance model
        injections: Complex net injection per node (pu, generation positive);
            slack entries are ignored
        tol: Convergence tolerance on the largest mismatch (pu)
        max_iter: Newton iteration limit
        v0: Starting voltages, defaults to the no-load profile

    Returns:
        Converged NetworkState

    Raises:
        PowerFlowError: On divergence or iteration limit
    """
    injections = np.asarray(injections, dtype=complex)
    if injections.shape != (model.size,):
        raise ValueError(f"expected {model.size} injections, got shape {injections.shape}")
    pq = model.pq

    v = np.array(model.no_load if v0 is None else v0, dtype=complex)
    v[model.slack] = model.slack_voltage
    va = np.angle(v)
    vm = np.abs(v)

    def mismatch(v):
        mis = v * np.conj(model.ybus @ v) - injections
        return np.r_[mis[pq].real, mis[pq].imag]

    f = mismatch(v)
    error = float(np.linalg.norm(f, np.inf)) if len(f) else 0.0
    iterations = 0
    npq = len(pq)
    while error > tol and iterations < max_iter:
        iterations += 1
        dx = spsolve(_jacobian(model.ybus, v, pq), f)
        va[pq] -= dx[:npq]
        vm[pq] -= dx[npq:]
        v = vm * np.exp(1j * va)
        vm = np.abs(v)
        va = np.angle(v)
        f = mismatch(v)
        error = float(np.linalg.norm(f, np.inf))
        if not math.isfinite(error):
            raise PowerFlowError("power flow diverged", error, iterations)

    if error > tol:
        raise PowerFlowError("power flow did not converge", error, iterations)

    power = v * np.conj(model.ybus @ v)
    return NetworkState(voltages=v, power=power, residual=error, iterations=iterations)


def branch_losses(model: AdmittanceModel, state: NetworkState) -> complex:
    """Total complex losses over all branches (pu)."""
    v = state.voltages
    total = 0j
    for b in model.branches:
        vf, vt = v[b.from_idx], v[b.to_idx]
        i_f = b.yff @ vf + b.yft @ vt
        i_t = b.ytf @ vf + b.ytt @ vt
        total += np.sum(vf * np.conj(i_f)) + np.sum(vt * np.conj(i_t))
    return complex(total)


def injections_at(model: AdmittanceModel, scenario: Scenario, schedule, season: str, t: int) -> np.ndarray:
    """Complex net injection per node (pu) for one time step of a schedule."""
    s = np.zeros(model.size, dtype=complex)
    for d in scenario.dwellings:
        p = float(schedule.net_injection_kw(d.id, season)[t]) / model.base_kva
        s[model.index(d.bus, d.phase)] += complex(p, p * d.tan_phi)
    return s


@dataclass(frozen=True)
class Violation:
    season: str
    t: int
    bus: str
    phase: str
    quantity: str  # "v_min" | "v_max"
    value: float
    bound: float


@dataclass
class ViolationReport:
    """Voltage band violations found by the audit; empty means feasible."""

    violations: list[Violation] = field(default_factory=list)
    worst_margin: float = math.inf
    n_checks: int = 0
    voltages: dict[str, np.ndarray] = field(default_factory=dict)
    nodes: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def to_frame(self) -> pd.DataFrame:
        columns = ["season", "t", "bus", "phase", "quantity", "value", "bound"]
        return pd.DataFrame([
            [v.season, v.t, v.bus, v.phase, v.quantity, v.value, v.bound] for v in self.violations
        ], columns=columns)

    def count(self, quantity: str) -> int:
        return sum(1 for v in self.violations if v.quantity == quantity)


def audit_solution(scenario: Scenario, design, schedule,
                   model: Optional[AdmittanceModel] = None,
                   tolerance: Optional[float] = None) -> ViolationReport:
    """
    Post-optimisation power flow over every time step with the schedule's
    net injections fixed; reports every voltage band violation.

    Raises:
        DesignError: If the design does not belong to the scenario
        PowerFlowError: If the oracle fails at some time step
    """
    if design is not None:
        design.validate(scenario)
    model = model or assemble_admittance(scenario)
    tolerances = scenario.settings.tolerances
    tolerance = tolerances.voltage if tolerance is None else tolerance
    report = ViolationReport(nodes=model.nodes)

    start = time.monotonic()
    for season in scenario.seasons:
        mags = np.zeros((season.n_steps, model.size))
        series = np.zeros((season.n_steps, model.size), dtype=complex)
        v_prev = None
        for t in range(season.n_steps):
            state = newton_power_flow(
                model, injections_at(model, scenario, schedule, season.id, t),
                tol=tolerances.newton, max_iter=tolerances.newton_max_iter, v0=v_prev)
            v_prev = state.voltages
            series[t] = state.voltages
            mags[t] = state.magnitudes
            for k in model.pq:
                bus, phase = model.nodes[k]
                value = float(mags[t, k])
                report.n_checks += 1
                report.worst_margin = min(report.worst_margin,
                                          value - model.v_min[k], model.v_max[k] - value)
                if value > model.v_max[k] + tolerance:
                    report.violations.append(Violation(season.id, t, bus, phase, "v_max", value, model.v_max[k]))
                elif value < model.v_min[k] - tolerance:
                    report.violations.append(Violation(season.id, t, bus, phase, "v_min", value, model.v_min[k]))
        report.voltages[season.id] = series

    log_solve("Audit", "ok" if report.ok else "violations",
              (time.monotonic() - start) * 1000,
              f"checks={report.n_checks} violations={len(report)} worst_margin={report.worst_margin:+.4f}")
    return report


def add_mopf_constraints(m: pyo.ConcreteModel, model: AdmittanceModel, scenario: Scenario) -> None:
    """
    Add rectangular voltage variables, per-node P/Q balance equalities and
    squared-magnitude bands for every season and time step.

    Dwelling injections are ``sold - grid`` (kW) scaled to per-unit, with
    reactive power from the dwelling power factor.

    Raises:
        NetworkError: If a dwelling sits on a phase its bus does not have
    """
    at_node: dict[int, list] = {}
    for d in scenario.dwellings:
        at_node.setdefault(model.index(d.bus, d.phase), []).append(d)

    ybus = model.ybus.tocsr()
    pq = [int(k) for k in model.pq]
    slack_v = {int(k): v for k, v in zip(model.slack, model.slack_voltage)}
    coupling = {k: [(int(j), ybus[k, j]) for j in ybus[k].indices] for k in pq}

    m.NODES = pyo.Set(initialize=pq, ordered=True, doc="non-slack bus-phases")
    m.ve = pyo.Var(m.NODES, m.S, m.T, within=pyo.Reals, bounds=(-1.5, 1.5),
                   initialize=lambda m, k, s, t: model.no_load[k].real, doc="voltage real part (pu)")
    m.vf = pyo.Var(m.NODES, m.S, m.T, within=pyo.Reals, bounds=(-1.5, 1.5),
                   initialize=lambda m, k, s, t: model.no_load[k].imag, doc="voltage imaginary part (pu)")

    def e(j, s, t):
        return slack_v[j].real if j in slack_v else m.ve[j, s, t]

    def f(j, s, t):
        return slack_v[j].imag if j in slack_v else m.vf[j, s, t]

    def current(k, s, t):
        # Real and imaginary parts of (Y V)_k
        ire = sum(y.real * e(j, s, t) - y.imag * f(j, s, t) for j, y in coupling[k])
        iim = sum(y.real * f(j, s, t) + y.imag * e(j, s, t) for j, y in coupling[k])
        return ire, iim

    def p_injection(k, s, t):
        return sum((m.sold[d.id, s, t] - m.grid[d.id, s, t]) / model.base_kva for d in at_node.get(k, []))

    def q_injection(k, s, t):
        return sum((m.sold[d.id, s, t] - m.grid[d.id, s, t]) * d.tan_phi / model.base_kva
                   for d in at_node.get(k, []))

    def active_balance(m, k, s, t):
        ire, iim = current(k, s, t)
        return m.ve[k, s, t] * ire + m.vf[k, s, t] * iim == p_injection(k, s, t)
    m.active_balance = pyo.Constraint(m.NODES, m.S, m.T, rule=active_balance,
                                      doc="P = e*Ire + f*Iim at every non-slack node")

    def reactive_balance(m, k, s, t):
        ire, iim = current(k, s, t)
        return m.vf[k, s, t] * ire - m.ve[k, s, t] * iim == q_injection(k, s, t)
    m.reactive_balance = pyo.Constraint(m.NODES, m.S, m.T, rule=reactive_balance,
                                        doc="Q = f*Ire - e*Iim at every non-slack node")

    m.voltage_band = pyo.Constraint(
        m.NODES, m.S, m.T,
        rule=lambda m, k, s, t: pyo.inequality(
            model.v_min[k] ** 2, m.ve[k, s, t] ** 2 + m.vf[k, s, t] ** 2, model.v_max[k] ** 2),
        doc="v_min^2 <= |V|^2 <= v_max^2")


def initialise_voltages(m: pyo.ConcreteModel, model: AdmittanceModel, scenario: Scenario,
                        schedule=None) -> bool:
    """
    Seed the voltage variables from the Newton oracle on a schedule's
    injections, or with the no-load profile.

    Returns:
        True if every time step was seeded from a converged power flow
    """
    converged = True
    tolerances = scenario.settings.tolerances
    for season in scenario.seasons:
        v_prev = None
        for t in range(season.n_steps):
            v = model.no_load
            if schedule is not None:
                try:
                    state = newton_power_flow(
                        model, injections_at(model, scenario, schedule, season.id, t),
                        tol=tolerances.newton, max_iter=tolerances.newton_max_iter, v0=v_prev)
                    v = v_prev = state.voltages
                except PowerFlowError:
                    converged = False
            for k in model.pq:
                m.ve[int(k), season.id, t].set_value(float(v[k].real))
                m.vf[int(k), season.id, t].set_value(float(v[k].imag))
    return converged


def voltages_from_model(m: pyo.ConcreteModel, model: AdmittanceModel, scenario: Scenario) -> dict[str, np.ndarray]:
    """Complex voltages per season (time step x node) from a solved NLP."""
    out = {}
    for season in scenario.seasons:
        v = np.tile(model.no_load, (season.n_steps, 1))
        for t in range(season.n_steps):
            v[t, model.slack] = model.slack_voltage
            for k in model.pq:
                v[t, k] = complex(pyo.value(m.ve[int(k), season.id, t]),
                                  pyo.value(m.vf[int(k), season.id, t]))
        out[season.id] = v
    return out


__all__ = [
    "AdmittanceModel",
    "NetworkState",
    "ViolationReport",
    "Violation",
    "NetworkError",
    "PowerFlowError",
    "assemble_admittance",
    "newton_power_flow",
    "branch_losses",
    "audit_solution",
    "add_mopf_constraints",
    "initialise_voltages",
    "voltages_from_model",
    "injections_at",
]
