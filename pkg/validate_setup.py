#!/usr/bin/env python3
"""
Setup Validation Script
=======================

Validates that the Python packages, solvers and shipped data needed by the
design tool are in place.

Usage:
    python validate_setup.py             # Validate setup
    python validate_setup.py --smoke     # Also run a short MILP-only solve

Options:
    --smoke      Solve the two-dwelling fixture with the MILP alone
"""

import importlib
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

# Load .env file if it exists
try:
    from dotenv import load_dotenv
    env_path = Path(__file__).parent / ".env"
    if env_path.exists():
        load_dotenv(env_path)
except ImportError:
    pass  # python-dotenv not installed, skip


# import name -> distribution name
REQUIRED_PACKAGES = {
    "pyomo": "pyomo",
    "highspy": "highspy",
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "networkx": "networkx",
    "dotenv": "python-dotenv",
}

GREEN, RED, YELLOW, BLUE, BOLD, RESET = "92", "91", "93", "94", "1", "0"


def paint(text: str, *codes: str) -> str:
    return f"\033[{';'.join(codes)}m{text}\033[{RESET}m"


@dataclass
class Section:
    """Check results of one validation section."""

    title: str
    passed: int = 0
    total: int = 0
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        bar = paint("-" * 60, BOLD, BLUE)
        print(f"\n{bar}\n{paint('  ' + self.title, BOLD, BLUE)}\n{bar}\n")

    def check(self, name: str, ok: bool, message: str = "", hint: str = "") -> bool:
        self.total += 1
        self.passed += int(ok)
        mark = paint("✓", GREEN) if ok else paint("✗", RED)
        print(f"  {mark} {name}" + (f" - {message}" if message else ""))
        if hint and not ok:
            self.info(hint)
        return ok

    def info(self, message: str) -> None:
        print(f"    {paint('ℹ', BLUE)} {message}")

    @property
    def state(self) -> str:
        if self.total and self.passed == self.total:
            return paint("READY", GREEN)
        return paint("PARTIAL", YELLOW) if self.passed else paint("NOT READY", RED)


def validate_packages() -> Section:
    section = Section("Python Packages")
    v = sys.version_info
    section.check(f"Python >= 3.10 (found {v.major}.{v.minor}.{v.micro})", v >= (3, 10))
    for module, dist in REQUIRED_PACKAGES.items():
        try:
            found = getattr(importlib.import_module(module), "__version__", "installed")
            section.check(dist, True, found)
        except ImportError as e:
            section.check(dist, False, str(e), hint=f"pip install {dist}")
    return section


def validate_solvers() -> Section:
    """The selected MILP and NLP backends must both be available."""
    section = Section("Solvers")
    try:
        from backends import MILP_BACKENDS, NLP_BACKENDS, list_available_backends
        from settings import SettingsError, default_settings
    except ImportError as e:
        section.check("backends package", False, str(e))
        return section

    available = list_available_backends()
    try:
        settings = default_settings()
    except SettingsError as e:
        section.check("DES_MILP_SOLVER / DES_NLP_SOLVER", False, str(e))
        return section
    for kind, registry, chosen in (("milp", MILP_BACKENDS, settings.milp_backend),
                                   ("nlp", NLP_BACKENDS, settings.nlp_backend)):
        others = [n for n in registry if n != chosen and n in available[kind]]
        section.check(f"{kind.upper()} {chosen} (selected)", chosen in available[kind],
                      f"also available: {', '.join(others)}" if others else "")
    if settings.nlp_backend not in available["nlp"]:
        section.info("Ipopt executable not found on PATH (e.g. conda install -c conda-forge ipopt)")
    return section


def validate_data() -> Section:
    section = Section("Shipped Data")
    try:
        from catalog import CATALOG_DIR, load_builtin_catalog
        from scenario import list_fixtures, load_fixture
    except ImportError as e:
        section.check("catalog/scenario modules", False, str(e))
        return section

    try:
        catalog = load_builtin_catalog()
        section.check("builtin catalog", True,
                      f"{len(catalog.ashps)} ASHPs, {len(catalog.tanks)} tanks, "
                      f"{len(catalog.boilers)} boilers, {len(catalog.batteries)} batteries")
    except Exception as e:
        section.check("builtin catalog", False, str(e))
    section.info(f"Catalog directory: {CATALOG_DIR}")

    for name in list_fixtures():
        try:
            scenario = load_fixture(name)
            section.check(f"fixture {name}", True,
                          f"{len(scenario.dwellings)} dwellings, {len(scenario.seasons)} seasons")
        except Exception as e:
            section.check(f"fixture {name}", False, str(e))
    return section


def run_smoke_test() -> Section:
    """MILP-only solve of the two-dwelling fixture with the tiny catalog."""
    section = Section("Smoke Test")
    try:
        from logging_util import close_logger, init_logger
        from orchestrator import run
        from scenario import load_fixture

        scenario = load_fixture("two_dwelling", catalog="tiny")
        settings = scenario.settings.with_overrides(variant="milp-only", time_limit=120.0)
        with tempfile.TemporaryDirectory() as tmp:
            init_logger(Path(tmp))
            try:
                result = run(scenario, settings)
            finally:
                close_logger()
        ok = result.objective is not None
        section.check("two_dwelling MILP", ok,
                      f"objective {result.objective:,.2f}" if ok else f"status {result.status}")
    except Exception as e:
        section.check("two_dwelling MILP", False, str(e))
    return section


def main() -> int:
    print(f"\n{paint('DES Design - Setup Validation', BOLD)}")

    args = sys.argv[1:]
    if "--help" in args or "-h" in args:
        print(__doc__)
        return 0

    sections = [validate_packages(), validate_solvers(), validate_data()]
    if "--smoke" in args:
        sections.append(run_smoke_test())

    print(f"\n{paint('Summary', BOLD)}")
    for s in sections:
        print(f"  {s.title}: {s.passed}/{s.total} checks passed - {s.state}")
    ready = all(s.passed == s.total for s in sections)
    print()
    print(paint("  All checks passed.", GREEN, BOLD) if ready
          else paint("  Some checks failed. Please review the issues above.", YELLOW))
    print()
    return 0 if ready else 1


if __name__ == "__main__":
    sys.exit(main())
