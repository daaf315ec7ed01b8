"""
Algorithm Settings
==================

Run configuration for the decomposition algorithms: variant, limits, the
epsilon schedule used by the complementarity loops, tolerances, and backend
names. Defaults can be overridden by a scenario's ``settings.json``, by
environment variables, and finally by command line flags.
"""

import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

from backends import DEFAULT_MILP_BACKEND, DEFAULT_NLP_BACKEND, MILP_BACKENDS, NLP_BACKENDS
from catalog import TECHNOLOGIES


VARIANTS = ("pa", "pa-h", "milp-only")

# Desk-scale defaults
DEFAULT_TIME_LIMIT_S = 600.0
DEFAULT_MAX_ITERATIONS = 50


class SettingsError(ValueError):
    """Raised when a settings value is out of range or unknown."""


@dataclass(frozen=True)
class EpsilonSchedule:
    """Regularisation schedule for the buy/sell complementarity product (pu^2)."""

    eps_initial: float = 1e-2
    reduction_factor: float = 0.1
    eps_min: float = 1e-8
    eps_increase_factor: float = 10.0
    max_iterations: int = 12
    # Absolute slack on the residual when the floor is reached
    residual_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.eps_min < self.eps_initial:
            raise SettingsError("epsilon: need 0 < eps_min < eps_initial")
        if not 0 < self.reduction_factor < 1:
            raise SettingsError("epsilon: reduction_factor must lie in (0, 1)")
        if self.eps_increase_factor <= 1:
            raise SettingsError("epsilon: eps_increase_factor must be > 1")
        if self.max_iterations < 1:
            raise SettingsError("epsilon: max_iterations must be >= 1")
        if self.residual_tol < 0:
            raise SettingsError("epsilon: residual_tol must be >= 0")

    def tightened(self, eps: float) -> float:
        """Next value after a locally optimal solve, never below eps_min."""
        return max(eps * self.reduction_factor, self.eps_min)

    def loosened(self, eps: float) -> float:
        return eps * self.eps_increase_factor


@dataclass(frozen=True)
class Tolerances:
    bound_rel: float = 1e-6
    voltage: float = 1e-5
    newton: float = 1e-10
    newton_max_iter: int = 30
    breakdown_rel: float = 1e-6


@dataclass(frozen=True)
class AlgorithmSettings:
    """Everything that steers one design run."""

    variant: str = "pa"
    time_limit: float = DEFAULT_TIME_LIMIT_S
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    milp_gap: float = 1e-6
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    tolerances: Tolerances = field(default_factory=Tolerances)

    milp_backend: str = DEFAULT_MILP_BACKEND
    nlp_backend: str = DEFAULT_NLP_BACKEND
    nlp_max_iter: int = 3000

    # Purchases capped at own consumption; batteries never charge from the grid
    allow_grid_charging: bool = False
    battery_complementarity: bool = False

    brute_force_cap: int = 256
    technologies: tuple[str, ...] = TECHNOLOGIES

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SettingsError(f"variant must be one of {', '.join(VARIANTS)}; got {self.variant!r}")
        if self.time_limit <= 0:
            raise SettingsError("time_limit must be > 0")
        if self.max_iterations < 1:
            raise SettingsError("max_iterations must be >= 1")
        if not 0 <= self.milp_gap < 1:
            raise SettingsError("milp_gap must lie in [0, 1)")
        unknown = set(self.technologies) - set(TECHNOLOGIES)
        if unknown:
            raise SettingsError(f"unknown technologies: {', '.join(sorted(unknown))}")
        for field_name, registry in (("milp_backend", MILP_BACKENDS), ("nlp_backend", NLP_BACKENDS)):
            name = getattr(self, field_name)
            if name not in registry:
                raise SettingsError(f"{field_name}: unknown backend {name!r}; "
                                    f"available: {', '.join(registry)}")

    @property
    def pv_enabled(self) -> bool:
        return "pv" in self.technologies

    def with_overrides(self, **overrides: Any) -> "AlgorithmSettings":
        """Return a copy with the non-None overrides applied."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        eps_overrides = {
            k: overrides.pop(k) for k in list(overrides) if k in _EPSILON_FIELDS
        }
        settings = replace(self, **overrides) if overrides else self
        if eps_overrides:
            settings = replace(settings, epsilon=replace(settings.epsilon, **eps_overrides))
        return settings


_EPSILON_FIELDS = {f.name for f in fields(EpsilonSchedule)}
_TOLERANCE_FIELDS = {f.name for f in fields(Tolerances)}
_SETTINGS_FIELDS = {f.name for f in fields(AlgorithmSettings)}


def settings_from_dict(doc: dict, base: Optional[AlgorithmSettings] = None) -> AlgorithmSettings:
    """
    Apply a ``settings.json`` document on top of ``base`` (or the defaults).

    Nested ``epsilon`` and ``tolerances`` objects update only the given keys.
    """
    settings = base or default_settings()
    doc = dict(doc)

    eps_doc = doc.pop("epsilon", None) or {}
    tol_doc = doc.pop("tolerances", None) or {}
    for name, known in (("epsilon", _EPSILON_FIELDS), ("tolerances", _TOLERANCE_FIELDS)):
        section = eps_doc if name == "epsilon" else tol_doc
        unknown = set(section) - known
        if unknown:
            raise SettingsError(f"{name}: unknown fields {sorted(unknown)}")
    unknown = set(doc) - _SETTINGS_FIELDS
    if unknown:
        raise SettingsError(f"settings: unknown fields {sorted(unknown)}")

    if "technologies" in doc:
        doc["technologies"] = tuple(doc["technologies"])
    try:
        settings = replace(
            settings,
            epsilon=replace(settings.epsilon, **eps_doc),
            tolerances=replace(settings.tolerances, **tol_doc),
            **doc,
        )
    except TypeError as e:
        raise SettingsError(str(e)) from e
    return settings


def settings_to_dict(settings: AlgorithmSettings) -> dict:
    doc = {f.name: getattr(settings, f.name) for f in fields(settings)}
    doc["epsilon"] = {f.name: getattr(settings.epsilon, f.name) for f in fields(EpsilonSchedule)}
    doc["tolerances"] = {f.name: getattr(settings.tolerances, f.name) for f in fields(Tolerances)}
    doc["technologies"] = list(settings.technologies)
    return doc


def default_settings() -> AlgorithmSettings:
    """
    Defaults with environment overrides applied.

    Checks DES_MILP_SOLVER and DES_NLP_SOLVER, then falls back to the
    hardcoded backends.
    """
    return AlgorithmSettings(
        milp_backend=os.environ.get("DES_MILP_SOLVER") or DEFAULT_MILP_BACKEND,
        nlp_backend=os.environ.get("DES_NLP_SOLVER") or DEFAULT_NLP_BACKEND,
    )
