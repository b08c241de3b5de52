"""Shared fixtures and the acceptance-summary terminal hook."""

import sys

import pytest

from jointstab import PlantParams


@pytest.fixture(scope="session")
def params_ext():
    return PlantParams.extended()


@pytest.fixture(scope="session")
def params_ret():
    return PlantParams.retracted()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion after the run."""
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] != "test_acceptance":
            continue
        results = getattr(mod, "RESULTS", None)
        if results:
            terminalreporter.section("acceptance criteria")
            for line in results:
                terminalreporter.write_line(line)
        return
