"""
Test Kit
========

Shared helpers for the script-style test modules: a runner printing
PASS/FAIL/SKIP per test, fixture loaders, and a decorator that skips tests
whose solver is not installed.
"""

import functools
import traceback
import unittest
from typing import Callable, Iterable

from backends import get_milp_backend, get_nlp_backend
from scenario import Scenario, load_fixture
from settings import default_settings


@functools.lru_cache(maxsize=None)
def _available(kind: str) -> bool:
    settings = default_settings()
    try:
        if kind == "milp":
            return get_milp_backend(settings.milp_backend).is_available()
        return get_nlp_backend(settings.nlp_backend).is_available()
    except Exception:
        return False


def requires_solvers(milp: bool = True, nlp: bool = False):
    """Skip the decorated test when a required solver is unavailable."""

    def decorator(test: Callable) -> Callable:
        @functools.wraps(test)
        def wrapper(*args, **kwargs):
            if milp and not _available("milp"):
                raise unittest.SkipTest("MILP solver not available")
            if nlp and not _available("nlp"):
                raise unittest.SkipTest("NLP solver not available")
            return test(*args, **kwargs)
        return wrapper

    return decorator


@functools.lru_cache(maxsize=None)
def fixture(name: str, catalog: str = "tiny") -> Scenario:
    """Shipped fixture with a shipped catalog (cached; scenarios are immutable)."""
    return load_fixture(name, catalog=catalog)


def run_tests(title: str, tests: Iterable[Callable]) -> int:
    """
    Run test functions, printing one line per test and a results banner.

    Returns:
        Process exit code: 0 if nothing failed
    """
    print("=" * 70)
    print(f"  {title}")
    print("=" * 70)

    passed = failed = skipped = 0
    for test in tests:
        name = test.__name__
        try:
            test()
        except unittest.SkipTest as e:
            skipped += 1
            print(f"  SKIP: {name} ({e})")
        except Exception as e:
            failed += 1
            print(f"  FAIL: {name}")
            print(f"         {type(e).__name__}: {e}")
            print("".join(f"         {line}" for line in traceback.format_exc().splitlines(True)[-4:]))
        else:
            passed += 1
            print(f"  PASS: {name}")

    print("\n" + "-" * 70)
    suffix = f", {skipped} skipped" if skipped else ""
    print(f"  Results: {passed} passed, {failed} failed{suffix}")
    print("-" * 70)

    if failed == 0:
        print("\n  ALL TESTS PASSED")
    else:
        print(f"\n  {failed} TEST(S) FAILED")
    return 0 if failed == 0 else 1
