"""
Pyomo Solver Backends
=====================

Adapters from the backend interface to Pyomo's solver plugins: HiGHS (through
the appsi interface), CBC and GLPK for the MILP, Ipopt for the NLP.
"""

import time
from typing import Any, Optional

import pyomo.environ as pyo
from pyomo.opt import SolverStatus, TerminationCondition as tc

from .base import (
    ERROR,
    INFEASIBLE,
    ITERATION_LIMIT,
    LOCALLY_OPTIMAL,
    OPTIMAL,
    TIME_LIMIT,
    BackendConfig,
    BaseSolverBackend,
    SolveOutcome,
)


# Backend option names per solver: (mip_gap, max_iter, tolerance, time_limit option)
OPTION_NAMES = {
    "appsi_highs": {"mip_gap": "mip_rel_gap"},
    "cbc": {"mip_gap": "ratioGap"},
    "glpk": {"mip_gap": "mipgap"},
    "ipopt": {"max_iter": "max_iter", "tolerance": "tol", "time_limit": "max_cpu_time"},
}

# Solvers that honour the ``timelimit`` keyword of ``solve``
TIMELIMIT_KEYWORD = {"appsi_highs", "cbc", "glpk"}

OPTIMAL_TERMINATIONS = {tc.optimal, tc.locallyOptimal, tc.globallyOptimal}
INFEASIBLE_TERMINATIONS = {tc.infeasible, tc.infeasibleOrUnbounded, tc.invalidProblem}
TIME_LIMIT_TERMINATIONS = {tc.maxTimeLimit}
ITERATION_TERMINATIONS = {tc.maxIterations, tc.maxEvaluations}


def max_constraint_violation(model: pyo.ConcreteModel) -> float:
    """Largest bound violation over the model's active constraints at current values."""
    worst = 0.0
    for con in model.component_data_objects(pyo.Constraint, active=True, descend_into=True):
        body = pyo.value(con.body, exception=False)
        if body is None:
            continue
        if con.has_lb():
            worst = max(worst, pyo.value(con.lower) - body)
        if con.has_ub():
            worst = max(worst, body - pyo.value(con.upper))
    return worst


def active_objective(model: pyo.ConcreteModel):
    return next(model.component_data_objects(pyo.Objective, active=True, descend_into=True))


class PyomoSolverBackend(BaseSolverBackend):
    """Backend wrapping ``pyo.SolverFactory(solver_name)``."""

    def __init__(self, registry_name: str, solver_name: str, kind: str,
                 config: Optional[BackendConfig] = None):
        super().__init__(config)
        self._name = registry_name
        self._solver_name = solver_name
        self._kind = kind
        self._solver = None

    @property
    def name(self) -> str:
        return self._name

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def solver_name(self) -> str:
        return self._solver_name

    def _factory(self):
        if self._solver is None:
            self._solver = pyo.SolverFactory(self._solver_name)
        return self._solver

    def is_available(self) -> bool:
        try:
            return bool(self._factory().available(exception_flag=False))
        except Exception:
            return False

    def _merged(self, config: Optional[BackendConfig]) -> BackendConfig:
        if config is None:
            return self.config
        base = self.config
        return BackendConfig(
            time_limit=config.time_limit if config.time_limit is not None else base.time_limit,
            mip_gap=config.mip_gap if config.mip_gap is not None else base.mip_gap,
            max_iter=config.max_iter if config.max_iter is not None else base.max_iter,
            tolerance=config.tolerance if config.tolerance is not None else base.tolerance,
            tee=config.tee or base.tee,
            extra_options={**base.extra_options, **config.extra_options},
        )

    def _status(self, termination) -> str:
        if termination in OPTIMAL_TERMINATIONS:
            return OPTIMAL if self._kind == "milp" else LOCALLY_OPTIMAL
        if termination in INFEASIBLE_TERMINATIONS:
            return INFEASIBLE
        if termination in TIME_LIMIT_TERMINATIONS:
            return TIME_LIMIT
        if termination in ITERATION_TERMINATIONS:
            return ITERATION_LIMIT
        return ERROR

    def solve(self, model: Any, config: Optional[BackendConfig] = None) -> SolveOutcome:
        config = self._merged(config)
        start = time.monotonic()
        try:
            solver = self._factory()
            names = OPTION_NAMES.get(self._solver_name, {})
            for field_name in ("mip_gap", "max_iter", "tolerance"):
                value = getattr(config, field_name)
                if value is not None and field_name in names:
                    solver.options[names[field_name]] = value
            for option, value in config.extra_options.items():
                solver.options[option] = value

            kwargs: dict[str, Any] = {"load_solutions": False, "tee": config.tee}
            if config.time_limit is not None:
                if self._solver_name in TIMELIMIT_KEYWORD:
                    kwargs["timelimit"] = max(1, int(config.time_limit))
                elif "time_limit" in names:
                    solver.options[names["time_limit"]] = float(config.time_limit)

            results = solver.solve(model, **kwargs)
        except Exception as e:
            return SolveOutcome(
                status=ERROR,
                duration_ms=(time.monotonic() - start) * 1000,
                error=f"{type(e).__name__}: {e}",
            )

        duration_ms = (time.monotonic() - start) * 1000
        termination = results.solver.termination_condition
        status = self._status(termination)
        if status == ERROR and results.solver.status == SolverStatus.aborted:
            status = TIME_LIMIT

        outcome = SolveOutcome(status=status, duration_ms=duration_ms, termination=str(termination))

        # Time- and iteration-limited runs may still carry a usable point
        if status in (OPTIMAL, LOCALLY_OPTIMAL, TIME_LIMIT, ITERATION_LIMIT):
            try:
                if len(results.solution) > 0:
                    model.solutions.load_from(results)
                    outcome.has_solution = True
            except Exception as e:
                if status in (OPTIMAL, LOCALLY_OPTIMAL):
                    outcome.status = ERROR
                    outcome.error = f"solution load failed: {e}"

        if outcome.has_solution:
            outcome.objective = pyo.value(active_objective(model), exception=False)
            if self._kind == "nlp":
                outcome.max_violation = max_constraint_violation(model)
        return outcome
