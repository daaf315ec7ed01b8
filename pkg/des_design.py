#!/usr/bin/env python3
"""
DES Design
==========

Command-line front end for distributed energy system design on unbalanced
LV networks: runs the MILP/NLP decomposition with integer cuts, writes the
result artifacts, and audits stored solutions with the power-flow oracle.

Example Usage:
    # Run PA-H on a shipped fixture
    python des_design.py --fixture two_dwelling --algorithm pa-h

    # Run a scenario bundle with a 10 minute limit
    python des_design.py path/to/manifest.json --time-limit 600

    # MILP alone, then audit its schedule
    python des_design.py --fixture pv_heavy --algorithm milp-only --output out/milp
    python des_design.py --fixture pv_heavy --audit-only out/milp/result.json
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

# Load .env file if it exists
try:
    from dotenv import load_dotenv
    env_path = Path(__file__).parent / ".env"
    if env_path.exists():
        load_dotenv(env_path)
except ImportError:
    pass  # python-dotenv not installed, skip

from backends import BackendError
from catalog import TECHNOLOGIES, CatalogError
from logging_util import close_logger, init_logger, log
from milp_design import DesignError
from mopf import NetworkError, PowerFlowError, audit_solution
from orchestrator import (
    CONVERGED_BOUND_CROSSING,
    CONVERGED_EXHAUSTED,
    MAX_ITERATIONS,
    MILP_ONLY,
    TIME_LIMIT_REACHED,
    BruteForceCapError,
    brute_force_reference,
    run,
)
from report import VIOLATIONS_FILE, read_result, render_breakdown, violations_frame, write_artifacts
from scenario import ScenarioError, list_fixtures, load_fixture, parse_scenario
from settings import VARIANTS, SettingsError, default_settings


# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TIME_LIMIT = 3
EXIT_INFEASIBLE = 4
EXIT_ERROR = 5
EXIT_MAX_ITERATIONS = 6
EXIT_VIOLATIONS = 7

DEFAULT_OUTPUT_DIR = Path("./des_output")


def get_default_output_dir() -> Path:
    """DES_OUTPUT_DIR if set, else ./des_output."""
    env_dir = os.environ.get("DES_OUTPUT_DIR")
    if env_dir:
        return Path(env_dir)
    return DEFAULT_OUTPUT_DIR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="des_design.py",
        description="DES design - MILP/NLP decomposition with integer cuts and multiphase power flow audit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  # Run PA on a shipped fixture
  python des_design.py --fixture two_dwelling

  # Heuristic variant with a tighter epsilon floor
  python des_design.py --fixture four_dwelling --algorithm pa-h --eps-min 1e-9

  # Restrict technologies and raise the generation tariff
  python des_design.py scenario/manifest.json --technologies pv,battery,ashp --generation-tariff 2.0

  # Audit a stored result
  python des_design.py --fixture pv_heavy --audit-only des_output/result.json

Fixtures: {', '.join(list_fixtures()) or 'none'}

Exit Codes:
  0  converged or complete     4  infeasible / no incumbent
  2  usage error               5  internal or solver error
  3  time limit reached        6  max iterations without convergence
                               7  audit found voltage violations

Environment Variables:
  DES_OUTPUT_DIR        Default output directory (default: ./des_output)
  DES_MILP_SOLVER       MILP backend: highs, cbc or glpk (default: highs)
  DES_NLP_SOLVER        NLP backend (default: ipopt)
        """,
    )

    parser.add_argument("manifest", nargs="?", type=Path, default=None,
                        help="Scenario manifest.json (or the directory holding it)")
    parser.add_argument("--fixture", type=str, default=None,
                        help="Use a shipped fixture instead of a manifest")
    parser.add_argument("--catalog", type=str, default=None,
                        help="Catalog override: builtin, a shipped catalog name, or a JSON path")
    parser.add_argument("--algorithm", choices=VARIANTS, default=None,
                        help="pa (CR), pa-h (CR-H) or milp-only (default: scenario setting or pa)")
    parser.add_argument("--time-limit", type=float, default=None, help="Wall-clock limit in seconds")
    parser.add_argument("--max-iters", type=int, default=None, help="Maximum decomposition iterations")
    parser.add_argument("--eps-initial", type=float, default=None, help="Initial complementarity epsilon")
    parser.add_argument("--eps-min", type=float, default=None, help="Complementarity epsilon floor")
    parser.add_argument("--technologies", type=str, default=None,
                        help=f"Comma-separated subset of {','.join(TECHNOLOGIES)}")
    parser.add_argument("--generation-tariff", type=float, default=None,
                        help="Override the generation tariff (GBP/kWh)")
    parser.add_argument("--milp-solver", type=str, default=None, help="MILP backend name")
    parser.add_argument("--nlp-solver", type=str, default=None, help="NLP backend name")
    parser.add_argument("--output", type=Path, default=None,
                        help="Output directory (default: DES_OUTPUT_DIR or ./des_output)")
    parser.add_argument("--audit-only", type=Path, default=None, metavar="RESULT",
                        help="Audit the schedule of a stored result.json and exit")
    parser.add_argument("--brute-force", action="store_true",
                        help="Evaluate every design with CR (small scenarios only)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    technologies = None
    if args.technologies:
        technologies = tuple(t.strip() for t in args.technologies.split(",") if t.strip())
    return {
        "variant": args.algorithm,
        "time_limit": args.time_limit,
        "max_iterations": args.max_iters,
        "eps_initial": args.eps_initial,
        "eps_min": args.eps_min,
        "technologies": technologies,
        "milp_backend": args.milp_solver,
        "nlp_backend": args.nlp_solver,
    }


def load_scenario(args: argparse.Namespace):
    """Load the scenario named on the command line with CLI overrides applied."""
    base = default_settings()
    if args.fixture:
        scenario = load_fixture(args.fixture, catalog=args.catalog, settings=base)
    else:
        scenario = parse_scenario(args.manifest, catalog=args.catalog, settings=base)

    overrides = _overrides(args)
    settings = scenario.settings.with_overrides(**overrides)
    changes = {}
    if settings != scenario.settings:
        changes["settings"] = settings
        if overrides["technologies"] is not None:
            changes["catalog"] = scenario.catalog.restricted(settings.technologies)
    if args.generation_tariff is not None:
        changes["tariffs"] = replace(scenario.tariffs, generation_tariff=args.generation_tariff)
        if "catalog" in changes:
            changes["catalog"] = replace(changes["catalog"], economics=changes["tariffs"])
    return scenario.with_changes(**changes) if changes else scenario


def exit_code_for(status: Optional[str], has_incumbent: bool) -> int:
    if not has_incumbent:
        return EXIT_ERROR if status == "error" else (
            EXIT_TIME_LIMIT if status == TIME_LIMIT_REACHED else EXIT_INFEASIBLE)
    return {
        CONVERGED_BOUND_CROSSING: EXIT_OK,
        CONVERGED_EXHAUSTED: EXIT_OK,
        MILP_ONLY: EXIT_OK,
        TIME_LIMIT_REACHED: EXIT_TIME_LIMIT,
        MAX_ITERATIONS: EXIT_MAX_ITERATIONS,
    }.get(status, EXIT_ERROR)


def run_exit_code(result) -> int:
    """
    Exit code of a finished run.

    A decomposition incumbent must pass the audit: a failed audit is an
    error and a band violation exits with EXIT_VIOLATIONS. The MILP-only
    schedule is reported as is.
    """
    code = exit_code_for(result.status, result.design is not None)
    if code != EXIT_OK or result.design is None:
        return code
    if result.audit_error is not None:
        return EXIT_ERROR
    if result.variant != "milp-only" and result.violations is not None and not result.violations.ok:
        return EXIT_VIOLATIONS
    return code


def run_audit_only(scenario, result_path: Path, output_dir: Path) -> int:
    loaded = read_result(result_path)
    if loaded.schedule is None:
        log(f"Error: {result_path} holds no schedule to audit")
        return EXIT_INFEASIBLE
    report = audit_solution(scenario, loaded.design, loaded.schedule)
    output_dir.mkdir(parents=True, exist_ok=True)
    violations_frame(report).to_csv(output_dir / VIOLATIONS_FILE, index=False)
    log(f"Audit: {len(report)} violations ({report.count('v_max')} v_max, {report.count('v_min')} v_min), "
        f"worst margin {report.worst_margin:+.4f} pu")
    log(f"Violations written to {output_dir / VIOLATIONS_FILE}")
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def run_brute_force(scenario) -> int:
    best = brute_force_reference(scenario)
    for design, ub, termination in best.evaluated:
        value = f"{ub:,.2f}" if ub is not None else "-"
        log(f"  {value:>14}  {termination:<22} {design.selection()}")
    if best.design is None:
        log("No design reached an upper bound")
        return EXIT_INFEASIBLE
    log(f"\nBest UB: {best.ub:,.2f}")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if (args.manifest is None) == (args.fixture is None):
        parser.print_usage(sys.stderr)
        print("error: give exactly one of a manifest path or --fixture", file=sys.stderr)
        return EXIT_USAGE

    output_dir = args.output or get_default_output_dir()
    try:
        scenario = load_scenario(args)
    except (ScenarioError, CatalogError, SettingsError) as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logger = init_logger(output_dir)
    log(f"Log file: {logger.log_path}")
    try:
        if args.audit_only:
            return run_audit_only(scenario, args.audit_only, output_dir)
        if args.brute_force:
            return run_brute_force(scenario)

        result = run(scenario)
        paths = write_artifacts(result, scenario, output_dir)
        if result.breakdown is not None:
            try:
                log("\n" + render_breakdown(result.breakdown, scenario.settings.tolerances.breakdown_rel))
            except ValueError as e:
                log(f"Breakdown: {e}")
        if result.audit_error is not None:
            log(f"Error: audit of the incumbent failed: {result.audit_error}")
        elif result.violations is not None and not result.violations.ok:
            level = "Warning" if result.variant == "milp-only" else "Error"
            log(f"{level}: incumbent violates the voltage band at {len(result.violations)} points")
        log(f"Artifacts: {', '.join(str(p) for p in paths.values())}")
        return run_exit_code(result)
    except (BruteForceCapError, BackendError) as e:
        log(f"Error: {e}")
        return EXIT_USAGE
    except OSError as e:
        log(f"Error: {e}")
        return EXIT_USAGE
    except (DesignError, NetworkError, PowerFlowError) as e:
        log(f"Error: {e}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        log("\n\nInterrupted by user")
        return EXIT_ERROR
    finally:
        close_logger()


if __name__ == "__main__":
    sys.exit(main())
