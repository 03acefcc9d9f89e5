import contextlib
import functools
import logging
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "fluidmesh",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("fluidmesh")

# Checks recorded by the acceptance suite: criterion -> [(label, ok, detail)].
ACCEPTANCE = {}


@contextlib.contextmanager
def acceptance_check(criterion, label):
    """Record PASS/FAIL for one check of an acceptance criterion.

    Yields a list the test can append detail strings to. The check fails if
    the body raises (including a failed assert).
    """
    detail = []
    try:
        yield detail
    except BaseException:
        ACCEPTANCE.setdefault(criterion, []).append((label, False, detail))
        raise
    ACCEPTANCE.setdefault(criterion, []).append((label, True, detail))


def acceptance_lines():
    lines = []
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        ok = all(k[1] for k in checks)
        parts = []
        for label, passed, detail in checks:
            mark = "" if passed else " [FAIL]"
            parts.append(f"{label}{mark}" + (f" ({', '.join(detail)})" if detail else ""))
        lines.append(f"criterion {c}: {'PASS' if ok else 'FAIL'}  " + "; ".join(parts))
    return lines


@functools.lru_cache(maxsize=None)
def benchmark_run(name, seed=0):
    """Full pipeline run of a named benchmark, shared across test modules."""
    from fluidmesh import benchmarks, pipeline

    return pipeline.run_case(benchmarks.CASES[name](seed))


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="fluidmesh")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines():
        terminalreporter.write_line(line)
