"""
NLP Model
=========

The nonlinear subproblem of the decomposition: every DER constraint of the
design model with the design fixed as mutable parameters, the buy/sell
binaries replaced by regularised complementarity, and the multiphase power
flow block. One handle is reused across epsilon values and designs.
"""

from dataclasses import dataclass, field
from typing import Optional

import pyomo.environ as pyo

from backends import BackendConfig, BaseSolverBackend, SolveOutcome, get_nlp_backend
from complementarity import add_complementarity, complementarity_residual
from milp_design import (
    DesignVector,
    ScheduleSolution,
    add_der_block,
    add_network_flow_block,
    apply_schedule,
    extract_schedule,
)
from mopf import (
    AdmittanceModel,
    add_mopf_constraints,
    assemble_admittance,
    initialise_voltages,
    voltages_from_model,
)
from scenario import Scenario
from settings import AlgorithmSettings

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log_solve
except ImportError:
    def log_solve(name: str, status: str, duration_ms: float, detail: str = "") -> None:
        print(f"[{name}] {status} ({duration_ms:.0f}ms) {detail}")


# Objective in thousands of currency units
NLP_OBJECTIVE_SCALE = 1e-3


@dataclass
class NlpHandle:
    """
    A built NLP for one scenario.

    ``start`` is the schedule a cold solve starts from (typically the MILP
    schedule of the current iteration); warm solves start from the values
    left by the previous solve.
    """

    scenario: Scenario
    design: DesignVector
    model: pyo.ConcreteModel
    backend: BaseSolverBackend
    admittance: AdmittanceModel
    settings: AlgorithmSettings
    start: Optional[ScheduleSolution] = None
    solves: int = field(default=0)

    def set_design(self, design: DesignVector, start: Optional[ScheduleSolution] = None) -> None:
        """Swap in another design without rebuilding the model."""
        design.validate(self.scenario)
        m = self.model
        for key, value in design.binaries().items():
            getattr(m, key[0])[key[1:]].set_value(value)
        self.design = design
        self.start = start

    def set_epsilon(self, eps: float) -> None:
        self.model.eps.set_value(eps)

    @property
    def epsilon(self) -> float:
        return float(pyo.value(self.model.eps))

    def solve(self, warm_start: bool = False, time_limit: Optional[float] = None) -> SolveOutcome:
        config = BackendConfig(time_limit=time_limit) if time_limit is not None else None
        return solve_nlp(self, warm_start, config)

    def residual(self) -> float:
        return complementarity_residual(self.model)

    def extract_schedule(self) -> ScheduleSolution:
        schedule = extract_schedule(self.model, self.scenario)
        schedule.voltages = voltages_from_model(self.model, self.admittance, self.scenario)
        return schedule

    @property
    def n_binaries(self) -> int:
        return sum(1 for v in self.model.component_data_objects(pyo.Var) if v.is_binary())


def build_nlp(scenario: Scenario, design: DesignVector,
              settings: Optional[AlgorithmSettings] = None,
              admittance: Optional[AdmittanceModel] = None,
              backend: Optional[BaseSolverBackend] = None,
              start: Optional[ScheduleSolution] = None) -> NlpHandle:
    """
    Build the NLP for a fixed design.

    Raises:
        DesignError: If the design breaks cardinality or compatibility
        NetworkError: If a dwelling sits on a phase missing at its bus
    """
    settings = settings or scenario.settings
    design.validate(scenario)
    admittance = admittance or assemble_admittance(scenario)

    m = pyo.ConcreteModel(name=f"des_nlp_{scenario.name}")
    add_der_block(m, scenario, settings, design=design)
    add_network_flow_block(m, scenario)
    add_mopf_constraints(m, admittance, scenario)
    add_complementarity(m, scenario.base_kva, settings)
    m.objective = pyo.Objective(expr=NLP_OBJECTIVE_SCALE * m.total_cost, sense=pyo.minimize,
                                doc="total annualised cost (thousands)")

    backend = backend or get_nlp_backend(settings.nlp_backend,
                                         BackendConfig(max_iter=settings.nlp_max_iter))
    return NlpHandle(scenario=scenario, design=design, model=m, backend=backend,
                     admittance=admittance, settings=settings, start=start)


def _cold_start(handle: NlpHandle) -> None:
    m = handle.model
    for var in m.component_data_objects(pyo.Var):
        if not var.fixed:
            var.set_value(None, skip_validation=True)
    if handle.start is not None:
        apply_schedule(m, handle.start)
    initialise_voltages(m, handle.admittance, handle.scenario, handle.start)


def solve_nlp(handle: NlpHandle, warm_start: bool = False,
              config: Optional[BackendConfig] = None) -> SolveOutcome:
    """
    Solve the NLP at the handle's current epsilon and design.

    The outcome's objective is the total annualised cost in currency units.
    """
    if not warm_start:
        _cold_start(handle)
    outcome = handle.backend.solve(handle.model, config)
    handle.solves += 1
    if outcome.has_solution:
        outcome.objective = float(pyo.value(handle.model.total_cost))

    detail = f"obj={outcome.objective:,.2f}" if outcome.objective is not None else (outcome.error or "")
    if outcome.max_violation is not None:
        detail += f" viol={outcome.max_violation:.1e}"
    log_solve(f"NLP eps={handle.epsilon:.0e}", outcome.status, outcome.duration_ms, detail)
    return outcome

