import pytest

from froehlich.params import ModelParams, preset

# pass/fail lines collected by the acceptance suite, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small():
    """Small instance used as a three-way oracle (N ~ 20)."""
    return ModelParams(r=5.0, phi=6.0, chi=0.5, D=10, omega0=0.314, nbar=1.0)


@pytest.fixture
def bsa280():
    return preset("bsa-280")


@pytest.fixture
def bsa34():
    return preset("bsa-34")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
