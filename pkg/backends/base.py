"""
Base Solver Backend
===================

Abstract base class defining the interface every MILP/NLP backend adapter
implements. The optimisation modules only talk to this interface; they never
name a solver.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional

# Import logger - use try/except for when module is imported standalone
try:
    from logging_util import log
except ImportError:
    def log(message: str, end: str = "\n", flush: bool = False) -> None:
        print(message, end=end, flush=flush)


# Outcome statuses
OPTIMAL = "optimal"
LOCALLY_OPTIMAL = "locally-optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time-limit"
ITERATION_LIMIT = "iteration-limit"
ERROR = "error"

STATUSES = (OPTIMAL, LOCALLY_OPTIMAL, INFEASIBLE, TIME_LIMIT, ITERATION_LIMIT, ERROR)


@dataclass
class BackendConfig:
    """Limits and options for a single solve."""

    time_limit: Optional[float] = None  # seconds
    mip_gap: Optional[float] = None
    max_iter: Optional[int] = None
    tolerance: Optional[float] = None
    tee: bool = False

    # Passed through to the solver verbatim
    extra_options: dict[str, Any] = field(default_factory=dict)


@dataclass
class SolveOutcome:
    """Result of one backend solve."""

    status: str
    objective: Optional[float] = None
    duration_ms: float = 0.0
    max_violation: Optional[float] = None

    # Raw solver termination text
    termination: str = ""

    # Set when status == "error"
    error: Optional[str] = None

    has_solution: bool = False

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, LOCALLY_OPTIMAL)


class BaseSolverBackend(ABC):
    """
    Abstract base class for solver backends.

    A backend solves a model in place: on success, variable values are
    loaded into the model and the outcome reports the objective.
    """

    def __init__(self, config: Optional[BackendConfig] = None):
        self.config = config or BackendConfig()

    @property
    @abstractmethod
    def name(self) -> str:
        """Registry name of this backend."""
        pass

    @property
    @abstractmethod
    def kind(self) -> str:
        """Either "milp" or "nlp"."""
        pass

    @abstractmethod
    def is_available(self) -> bool:
        """Return True if the underlying solver can be invoked."""
        pass

    @abstractmethod
    def solve(self, model: Any, config: Optional[BackendConfig] = None) -> SolveOutcome:
        """
        Solve ``model`` in place.

        Args:
            model: Backend-specific model object
            config: Per-call overrides of the backend configuration

        Returns:
            SolveOutcome; solver failures are reported as status "error",
            never raised
        """
        pass

    def print_config_summary(self) -> None:
        log(f"Backend: {self.name} ({self.kind})")
        if self.config.time_limit:
            log(f"Time limit: {self.config.time_limit:g}s")
        if self.config.mip_gap is not None:
            log(f"MIP gap: {self.config.mip_gap:g}")
        if self.config.max_iter:
            log(f"Max iterations: {self.config.max_iter}")
