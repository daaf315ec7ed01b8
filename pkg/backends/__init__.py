"""
Solver Backends Package
=======================

A unified interface over the MILP and NLP solvers used by the design
algorithms. The core modules ask the registry for a backend by name.
"""

from typing import Optional

from .base import (
    ERROR,
    INFEASIBLE,
    ITERATION_LIMIT,
    LOCALLY_OPTIMAL,
    OPTIMAL,
    STATUSES,
    TIME_LIMIT,
    BackendConfig,
    BaseSolverBackend,
    SolveOutcome,
)
from .pyomo_solvers import PyomoSolverBackend, max_constraint_violation


class BackendError(ValueError):
    """Raised for an unknown backend name."""


# Registry name -> Pyomo solver plugin
MILP_BACKENDS = {
    "highs": "appsi_highs",
    "cbc": "cbc",
    "glpk": "glpk",
}

NLP_BACKENDS = {
    "ipopt": "ipopt",
}

DEFAULT_MILP_BACKEND = "highs"
DEFAULT_NLP_BACKEND = "ipopt"


def _get(registry: dict[str, str], kind: str, name: str,
         config: Optional[BackendConfig]) -> BaseSolverBackend:
    if name not in registry:
        available = ", ".join(registry.keys())
        raise BackendError(
            f"Unknown {kind.upper()} backend: {name}. Available backends: {available}"
        )
    return PyomoSolverBackend(name, registry[name], kind, config)


def get_milp_backend(name: str = DEFAULT_MILP_BACKEND,
                     config: Optional[BackendConfig] = None) -> BaseSolverBackend:
    """
    Factory function for MILP backends.

    Args:
        name: Registry name ("highs", "cbc" or "glpk")
        config: Default limits for every solve

    Returns:
        Configured backend instance

    Raises:
        BackendError: If name is not registered
    """
    return _get(MILP_BACKENDS, "milp", name, config)


def get_nlp_backend(name: str = DEFAULT_NLP_BACKEND,
                    config: Optional[BackendConfig] = None) -> BaseSolverBackend:
    """Factory function for NLP backends (see ``get_milp_backend``)."""
    return _get(NLP_BACKENDS, "nlp", name, config)


def list_available_backends() -> dict[str, list[str]]:
    """Registered backends whose solver is installed, by kind."""
    return {
        "milp": [n for n in MILP_BACKENDS if get_milp_backend(n).is_available()],
        "nlp": [n for n in NLP_BACKENDS if get_nlp_backend(n).is_available()],
    }


__all__ = [
    "BaseSolverBackend",
    "BackendConfig",
    "SolveOutcome",
    "PyomoSolverBackend",
    "BackendError",
    "get_milp_backend",
    "get_nlp_backend",
    "list_available_backends",
    "max_constraint_violation",
    "MILP_BACKENDS",
    "NLP_BACKENDS",
    "DEFAULT_MILP_BACKEND",
    "DEFAULT_NLP_BACKEND",
    "OPTIMAL",
    "LOCALLY_OPTIMAL",
    "INFEASIBLE",
    "TIME_LIMIT",
    "ITERATION_LIMIT",
    "ERROR",
    "STATUSES",
]
