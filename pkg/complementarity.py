"""
Complementarity Reformulation
=============================

Regularised complementarity constraints that replace the buy/sell binaries
in the NLP, and the epsilon-tightening loops that drive them to a solution
meeting the complementarity condition:

- CR:   tighten epsilon after every locally optimal solve, loosen it after a
        failed one, stop once the residual is at the floor
- CR-H: CR plus an early exit as soon as a locally optimal relaxed objective
        exceeds the incumbent lowest upper bound
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
import pyomo.environ as pyo

from backends import LOCALLY_OPTIMAL
from settings import AlgorithmSettings, EpsilonSchedule

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log, log_record
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)

    def log_record(kind: str, payload: dict) -> None:
        pass


# CR terminations
COMPLEMENTARITY_MET = "complementarity-met"
HEURISTIC_CUTOFF = "heuristic-cutoff"
EPS_FLOOR = "eps-floor"
NOT_LOCALLY_OPTIMAL = "not-locally-optimal"

TERMINATIONS = (COMPLEMENTARITY_MET, HEURISTIC_CUTOFF, EPS_FLOOR, NOT_LOCALLY_OPTIMAL)


class NlpLike(Protocol):
    """What the CR loops need from an NLP handle."""

    def set_epsilon(self, eps: float) -> None: ...

    def solve(self, warm_start: bool = False, time_limit: Optional[float] = None): ...

    def residual(self) -> float: ...

    def extract_schedule(self): ...


def complementarity_product(grid_kw: float, sold_kw: float, scale_kva: float = 1.0) -> float:
    """Buy/sell product in (per-unit)^2 on a ``scale_kva`` base."""
    return (grid_kw / scale_kva) * (sold_kw / scale_kva)


def add_complementarity(m: pyo.ConcreteModel, scale_kva: float, settings: AlgorithmSettings) -> None:
    """
    Add ``(grid/S)(sold/S) <= eps`` for every dwelling and time step, with
    ``eps`` a mutable parameter; with ``battery_complementarity`` set, also
    ``(ch/S)(disch/S) <= eps`` for every battery.
    """
    m.eps = pyo.Param(initialize=settings.epsilon.eps_initial, mutable=True, within=pyo.NonNegativeReals,
                      doc="complementarity regularisation (pu^2)")
    m.comp_scale = scale_kva

    m.buy_sell_complementarity = pyo.Constraint(
        m.I, m.S, m.T,
        rule=lambda m, i, s, t: (m.grid[i, s, t] / scale_kva) * (m.sold[i, s, t] / scale_kva) <= m.eps,
        doc="no simultaneous purchase and export (regularised)")

    if settings.battery_complementarity:
        m.battery_complementarity = pyo.Constraint(
            m.I, m.S, m.T, m.C,
            rule=lambda m, i, s, t, c: ((m.batt_ch[i, s, t, c] / scale_kva)
                                        * (m.batt_disch[i, s, t, c] / scale_kva) <= m.eps),
            doc="no simultaneous charge and discharge (regularised)")


def complementarity_residual(m: pyo.ConcreteModel) -> float:
    """Largest complementarity product at the model's current values (pu^2)."""
    scale = m.comp_scale
    worst = 0.0
    for (i, s, t) in m.grid:
        grid = pyo.value(m.grid[i, s, t], exception=False) or 0.0
        sold = pyo.value(m.sold[i, s, t], exception=False) or 0.0
        worst = max(worst, complementarity_product(max(grid, 0.0), max(sold, 0.0), scale))
    if hasattr(m, "battery_complementarity"):
        for (i, s, t, c) in m.batt_ch:
            ch = pyo.value(m.batt_ch[i, s, t, c], exception=False) or 0.0
            disch = pyo.value(m.batt_disch[i, s, t, c], exception=False) or 0.0
            worst = max(worst, complementarity_product(max(ch, 0.0), max(disch, 0.0), scale))
    return worst


def schedule_residual(schedule, scale_kva: float) -> float:
    """Largest buy/sell product of a stored schedule (pu^2)."""
    worst = 0.0
    for key, grid in schedule.series.items():
        if key[0] != "grid":
            continue
        sold = schedule.series[("sold",) + key[1:]]
        worst = max(worst, float(np.max(np.clip(grid, 0, None) * np.clip(sold, 0, None), initial=0.0)))
    return worst / scale_kva ** 2


@dataclass(frozen=True)
class CrStep:
    iteration: int
    eps: float
    status: str
    objective: Optional[float] = None
    residual: Optional[float] = None


@dataclass
class CrResult:
    """
    Outcome of a CR or CR-H run.

    ``ub`` is set for complementarity-met, and for eps-floor only when the
    residual at the floor is within ``residual_tol`` of eps_min; ``schedule``
    is the last locally optimal solution, if any.
    """

    schedule: Optional[object]
    ub: Optional[float]
    final_eps: float
    iterations: int
    termination: str
    trace: list[CrStep] = field(default_factory=list)
    timed_out: bool = False

    @property
    def nlp_solves(self) -> int:
        return len(self.trace)

    @property
    def accepted(self) -> bool:
        return self.ub is not None


def _run(handle: NlpLike, schedule: EpsilonSchedule, lub: Optional[float], label: str,
         deadline: Optional[float] = None) -> CrResult:
    eps = schedule.eps_initial
    trace: list[CrStep] = []
    best = None
    best_eps = eps

    for iteration in range(1, schedule.max_iterations + 1):
        time_limit = None
        if deadline is not None:
            time_limit = deadline - time.monotonic()
            if time_limit <= 0:
                log(f"{label}: time limit reached after {iteration - 1} solves")
                return CrResult(best, None, best_eps, iteration - 1, NOT_LOCALLY_OPTIMAL, trace,
                                timed_out=True)
        handle.set_epsilon(eps)
        outcome = handle.solve(warm_start=best is not None, time_limit=time_limit)
        if outcome.status != LOCALLY_OPTIMAL:
            step = CrStep(iteration, eps, outcome.status)
            trace.append(step)
            log_record("cr_step", {"algorithm": label, **step.__dict__})
            eps = schedule.loosened(eps)
            continue

        residual = handle.residual()
        step = CrStep(iteration, eps, outcome.status, outcome.objective, residual)
        trace.append(step)
        log_record("cr_step", {"algorithm": label, **step.__dict__})
        best = handle.extract_schedule()
        best_eps = eps

        if lub is not None and math.isfinite(lub) and outcome.objective > lub:
            return CrResult(best, None, eps, iteration, HEURISTIC_CUTOFF, trace)
        if residual <= schedule.eps_min:
            return CrResult(best, best.objective, eps, iteration, COMPLEMENTARITY_MET, trace)
        if eps <= schedule.eps_min:
            # Accepted only within the solver's feasibility slack on the floor
            if residual <= schedule.eps_min + schedule.residual_tol:
                return CrResult(best, best.objective, eps, iteration, EPS_FLOOR, trace)
            log(f"{label}: residual {residual:.2e} above the floor {schedule.eps_min:.0e}, no upper bound")
            return CrResult(best, None, eps, iteration, EPS_FLOOR, trace)
        eps = schedule.tightened(eps)

    return CrResult(best, None, best_eps, schedule.max_iterations, NOT_LOCALLY_OPTIMAL, trace)


def run_cr(handle: NlpLike, schedule: EpsilonSchedule, deadline: Optional[float] = None) -> CrResult:
    """
    Algorithm CR on a handle whose design is already fixed.

    Args:
        deadline: ``time.monotonic()`` value after which no further solve starts;
            each solve gets the remaining time as its limit

    Returns:
        CrResult; termination not-locally-optimal when no accepted point was
        reached within ``schedule.max_iterations`` solves or before ``deadline``
    """
    return _run(handle, schedule, None, "CR", deadline)


def run_cr_h(handle: NlpLike, schedule: EpsilonSchedule, lub: Optional[float],
             deadline: Optional[float] = None) -> CrResult:
    """Algorithm CR-H: CR with a cutoff against the incumbent lowest upper bound."""
    return _run(handle, schedule, lub, "CR-H", deadline)
