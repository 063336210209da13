"""Session fixtures and the acceptance-summary hook."""
from __future__ import annotations

import pytest

from gridgraph import _kernels
from gridgraph.caseio import load_case
from gridgraph.pipeline import newton_raphson_reference


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # pay any JIT compilation cost before the first timed assertion
    _kernels.warmup()


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def ieee30():
    return load_case("ieee30")


@pytest.fixture(scope="session")
def ieee118():
    return load_case("ieee118")


@pytest.fixture(scope="session")
def nr_solution():
    """Memoized Newton solutions, keyed by case name and tolerance."""
    cache: dict[tuple[str, float], tuple] = {}

    def get(case, tol: float = 1e-8, max_iters: int = 40):
        key = (case.name, tol)
        if key not in cache:
            cache[key] = newton_raphson_reference(case, tol=tol,
                                                  max_iters=max_iters)
        return cache[key]

    return get


# one line per acceptance criterion, echoed after the test summary so the
# verdicts survive pytest's output capture
ACCEPTANCE_LINES: list[tuple[int, str]] = []


def record_criterion(number: int, description: str, passed: bool) -> None:
    ACCEPTANCE_LINES.append(
        (number, f"{'PASS' if passed else 'FAIL'} criterion "
                 f"{number}: {description}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
