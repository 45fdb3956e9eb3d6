import numpy as np
import pytest

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def record(criterion: int, passed: bool, detail: str):
        ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[crit]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {crit}: {detail}")
