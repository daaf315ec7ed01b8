"""
Progress Display Utilities
==========================

Console banners and bound summaries for the decomposition loop.
"""

import math
from typing import Optional

from logging_util import log


def _money(value: Optional[float]) -> str:
    if value is None or not math.isfinite(value):
        return "-"
    return f"{value:,.2f}"


def print_run_header(scenario_name: str, variant: str, n_design_binaries: int,
                     time_limit: float, max_iterations: int) -> None:
    """Print a formatted header for a run."""
    log("\n" + "=" * 70)
    log(f"  DES DESIGN: {scenario_name} ({variant.upper()})")
    log("=" * 70)
    log(f"Design binaries: {n_design_binaries}")
    log(f"Time limit: {time_limit:g}s, max iterations: {max_iterations}")
    log("")


def print_iteration(iteration: int, lb: Optional[float], ub: Optional[float], lub: float,
                    cr_termination: Optional[str], elapsed: float) -> None:
    log(f"[iter {iteration:>3}] LB={_money(lb)}  UB={_money(ub)}  LUB={_money(lub)}"
        f"  CR={cr_termination or '-'}  t={elapsed:.1f}s")


def print_bounds_summary(ledger) -> None:
    """Print the final status, bounds and iteration count of a ledger."""
    log("\n" + "-" * 70)
    log(f"  STATUS: {ledger.status}")
    log("-" * 70)
    log(f"Iterations: {len(ledger.records)}")
    if ledger.records:
        log(f"Last LB: {_money(ledger.records[-1].lb)}")
    if math.isfinite(ledger.lub):
        log(f"LUB: {_money(ledger.lub)} (iteration {ledger.lub_iteration})")
    else:
        log("LUB: none found")
