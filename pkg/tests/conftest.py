import pytest

from budgeted_ads.model import ArmSpec, ProblemInstance


def make_instance(ctr, pay, budget, horizon):
    return ProblemInstance.from_arms(
        [ArmSpec(float(m), float(b), float(B)) for m, b, B in zip(ctr, pay, budget)], horizon
    )


@pytest.fixture
def two_arm():
    # the deterministic engine example: certain clicks, arm 1 holds two clicks
    return make_instance((1, 1), (1, 1), (2, 10), 5)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
