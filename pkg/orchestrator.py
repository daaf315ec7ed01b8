"""
Decomposition Orchestrator
==========================

The overall design loop: solve the MILP with the accumulated integer cuts
for a lower bound, fix its design in the NLP and run CR (variant "pa") or
CR-H ("pa-h") for an upper bound, keep the lowest upper bound, cut the
design off and repeat until the bounds cross, the design space is exhausted,
or a limit is hit. The incumbent is audited with the power-flow oracle.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from backends import INFEASIBLE, OPTIMAL, TIME_LIMIT
from complementarity import run_cr, run_cr_h
from milp_design import (
    CostBreakdown,
    DesignVector,
    ScheduleSolution,
    build_milp,
    design_space_size,
    enumerate_designs,
    extract_breakdown,
    fix_design,
    percentage_difference,
    solve_milp,
    unfix_design,
)
from mopf import PowerFlowError, ViolationReport, assemble_admittance, audit_solution
from nlp_model import NlpHandle, build_nlp
from progress import print_bounds_summary, print_iteration, print_run_header
from scenario import Scenario
from settings import AlgorithmSettings

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log, log_record
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)

    def log_record(kind: str, payload: dict) -> None:
        pass


CONVERGED_BOUND_CROSSING = "converged-bound-crossing"
CONVERGED_EXHAUSTED = "converged-exhausted"
TIME_LIMIT_REACHED = "time-limit"
MAX_ITERATIONS = "max-iterations"
MILP_ONLY = "milp-only"
SOLVER_ERROR = "error"

RUN_STATUSES = (CONVERGED_BOUND_CROSSING, CONVERGED_EXHAUSTED, TIME_LIMIT_REACHED,
                MAX_ITERATIONS, MILP_ONLY, SOLVER_ERROR)


class BruteForceCapError(ValueError):
    """Raised when the design space exceeds the brute-force cap."""


@dataclass(frozen=True)
class IntegerCut:
    """No-good cut: sum over B0 of z + sum over B1 of (1 - z) >= 1."""

    iteration: int
    b1: frozenset
    b0: frozenset

    def excludes(self, design: DesignVector) -> bool:
        """True iff ``design`` is the one assignment this cut removes."""
        values = design.binaries()
        return (all(values.get(k, 0) == 1 for k in self.b1)
                and all(values.get(k, 0) == 0 for k in self.b0))

    def lhs(self, design: DesignVector) -> int:
        values = design.binaries()
        return sum(values.get(k, 0) for k in self.b0) + sum(1 - values.get(k, 0) for k in self.b1)


def make_cut(design: DesignVector, iteration: int = 0) -> IntegerCut:
    values = design.binaries()
    return IntegerCut(
        iteration=iteration,
        b1=frozenset(k for k, v in values.items() if v == 1),
        b0=frozenset(k for k, v in values.items() if v == 0),
    )


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lb: Optional[float]
    ub: Optional[float]
    lub: float
    cr_termination: Optional[str]
    milp_status: str
    design: Optional[DesignVector]
    wall_time: float
    elapsed: float
    nlp_solves: int = 0

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "lb": self.lb,
            "ub": self.ub,
            "lub": self.lub if math.isfinite(self.lub) else None,
            "cr_termination": self.cr_termination,
            "milp_status": self.milp_status,
            "wall_time_s": self.wall_time,
            "elapsed_s": self.elapsed,
            "nlp_solves": self.nlp_solves,
        }


@dataclass
class BoundsLedger:
    """Per-iteration bounds, the incumbent lowest upper bound and the cuts."""

    records: list[IterationRecord] = field(default_factory=list)
    lub: float = math.inf
    lub_iteration: Optional[int] = None
    status: Optional[str] = None
    cuts: list[IntegerCut] = field(default_factory=list)

    def record(self, entry: IterationRecord) -> None:
        self.records.append(entry)
        log_record("iteration", entry.to_dict())

    def offer(self, iteration: int, ub: Optional[float]) -> bool:
        """Update the LUB with ``ub``; returns True if it improved."""
        if ub is not None and ub < self.lub:
            self.lub = ub
            self.lub_iteration = iteration
            return True
        return False

    @property
    def has_incumbent(self) -> bool:
        return math.isfinite(self.lub)

    def lower_bounds(self) -> list[float]:
        return [r.lb for r in self.records if r.lb is not None]

    def upper_bounds(self) -> list[float]:
        return [r.ub for r in self.records if r.ub is not None]


@dataclass
class RunResult:
    scenario_name: str
    variant: str
    ledger: BoundsLedger
    design: Optional[DesignVector] = None
    schedule: Optional[ScheduleSolution] = None
    breakdown: Optional[CostBreakdown] = None
    violations: Optional[ViolationReport] = None
    first_milp_objective: Optional[float] = None
    percent_difference: Optional[float] = None
    elapsed: float = 0.0

    # Set when the power-flow audit of the incumbent could not be completed
    audit_error: Optional[str] = None

    @property
    def status(self) -> Optional[str]:
        return self.ledger.status

    @property
    def objective(self) -> Optional[float]:
        return self.ledger.lub if self.ledger.has_incumbent else None


def _audit(scenario: Scenario, design: DesignVector, schedule: ScheduleSolution,
           admittance) -> tuple[Optional[ViolationReport], Optional[str]]:
    try:
        return audit_solution(scenario, design, schedule, admittance), None
    except PowerFlowError as e:
        log(f"Audit failed: {e}")
        return None, str(e)


def run(scenario: Scenario, settings: Optional[AlgorithmSettings] = None,
        on_iteration: Optional[Callable[[IterationRecord], None]] = None) -> RunResult:
    """
    Run the decomposition (or the MILP alone for variant "milp-only").

    Args:
        scenario: Validated scenario
        settings: Run settings, defaults to the scenario's
        on_iteration: Called with each IterationRecord as it is appended

    Returns:
        RunResult with the ledger and, if any upper bound was found, the
        incumbent design, its schedule, cost breakdown and audit report
    """
    settings = settings or scenario.settings
    start = time.monotonic()
    ledger = BoundsLedger()
    result = RunResult(scenario.name, settings.variant, ledger)

    milp = build_milp(scenario, settings)
    admittance = assemble_admittance(scenario)
    nlp: Optional[NlpHandle] = None
    incumbent: Optional[tuple[DesignVector, ScheduleSolution]] = None

    print_run_header(scenario.name, settings.variant, milp.n_design_binaries,
                     settings.time_limit, settings.max_iterations)

    def append(entry: IterationRecord) -> None:
        ledger.record(entry)
        print_iteration(entry.iteration, entry.lb, entry.ub, ledger.lub, entry.cr_termination, entry.elapsed)
        if on_iteration:
            on_iteration(entry)

    for iteration in range(settings.max_iterations):
        iteration_start = time.monotonic()
        remaining = settings.time_limit - (iteration_start - start)
        if remaining <= 0:
            ledger.status = TIME_LIMIT_REACHED
            break

        solved = solve_milp(milp, ledger.cuts, settings, time_limit=remaining)
        if solved.status == INFEASIBLE:
            ledger.status = CONVERGED_EXHAUSTED
            append(IterationRecord(iteration, None, None, ledger.lub, None, solved.status, None,
                                   time.monotonic() - iteration_start, time.monotonic() - start))
            break
        if solved.status != OPTIMAL:
            ledger.status = TIME_LIMIT_REACHED if solved.status == TIME_LIMIT else SOLVER_ERROR
            break
        if result.first_milp_objective is None:
            result.first_milp_objective = solved.lb

        if solved.lb > ledger.lub:
            ledger.status = CONVERGED_BOUND_CROSSING
            entry = IterationRecord(iteration, solved.lb, None, ledger.lub, None, solved.status, solved.design,
                                    time.monotonic() - iteration_start, time.monotonic() - start)
            append(entry)
            break

        if settings.variant == "milp-only":
            ledger.offer(iteration, solved.lb)
            incumbent = (solved.design, solved.schedule)
            ledger.status = MILP_ONLY
            entry = IterationRecord(iteration, solved.lb, None, ledger.lub, None, solved.status, solved.design,
                                    time.monotonic() - iteration_start, time.monotonic() - start)
            append(entry)
            break

        if nlp is None:
            nlp = build_nlp(scenario, solved.design, settings, admittance, start=solved.schedule)
        else:
            nlp.set_design(solved.design, start=solved.schedule)
        deadline = start + settings.time_limit
        if settings.variant == "pa-h":
            cr = run_cr_h(nlp, settings.epsilon, ledger.lub if ledger.has_incumbent else None, deadline)
        else:
            cr = run_cr(nlp, settings.epsilon, deadline)

        if ledger.offer(iteration, cr.ub):
            incumbent = (solved.design, cr.schedule)
        # The cut is added whether or not CR produced an upper bound
        ledger.cuts.append(make_cut(solved.design, iteration))

        entry = IterationRecord(iteration, solved.lb, cr.ub, ledger.lub, cr.termination, solved.status,
                                solved.design, time.monotonic() - iteration_start,
                                time.monotonic() - start, cr.nlp_solves)
        append(entry)

        if cr.timed_out or time.monotonic() - start >= settings.time_limit:
            ledger.status = TIME_LIMIT_REACHED
            break
    else:
        ledger.status = MAX_ITERATIONS

    if incumbent is not None:
        design, schedule = incumbent
        result.design = design
        result.schedule = schedule
        result.breakdown = extract_breakdown(scenario, design, schedule)
        result.violations, result.audit_error = _audit(scenario, design, schedule, admittance)
        if result.first_milp_objective:
            result.percent_difference = percentage_difference(ledger.lub, result.first_milp_objective)

    result.elapsed = time.monotonic() - start
    print_bounds_summary(ledger)
    return result


@dataclass
class BruteForceResult:
    design: Optional[DesignVector]
    ub: Optional[float]
    evaluated: list[tuple[DesignVector, Optional[float], str]] = field(default_factory=list)


def brute_force_reference(scenario: Scenario, settings: Optional[AlgorithmSettings] = None) -> BruteForceResult:
    """
    Run CR on every feasible design and return the cheapest.

    Each design is first fixed in the MILP; designs whose MILP is infeasible
    are skipped without an NLP solve.

    Raises:
        BruteForceCapError: If the design space exceeds ``brute_force_cap``
    """
    settings = settings or scenario.settings
    size = design_space_size(scenario)
    if size > settings.brute_force_cap:
        raise BruteForceCapError(
            f"design space has {size} combinations, cap is {settings.brute_force_cap}")

    milp = build_milp(scenario, settings)
    admittance = assemble_admittance(scenario)
    nlp: Optional[NlpHandle] = None
    best = BruteForceResult(design=None, ub=None)

    try:
        for design in enumerate_designs(scenario):
            fix_design(milp, design)
            screened = solve_milp(milp, (), settings)
            if screened.status != OPTIMAL:
                best.evaluated.append((design, None, screened.status))
                continue
            if nlp is None:
                nlp = build_nlp(scenario, design, settings, admittance, start=screened.schedule)
            else:
                nlp.set_design(design, start=screened.schedule)
            cr = run_cr(nlp, settings.epsilon)
            best.evaluated.append((design, cr.ub, cr.termination))
            if cr.ub is not None and (best.ub is None or cr.ub < best.ub):
                best.design, best.ub = design, cr.ub
    finally:
        unfix_design(milp)
    return best
