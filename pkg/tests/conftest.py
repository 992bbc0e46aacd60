from pathlib import Path

import pytest

from equished.matpower import case14 as load_case14
from equished.scenario import ScenarioConfig, apply_scenario, parse_beta_grid, solve_scenario, study_config, sweep_beta

DATA = Path(__file__).parent / "data"
STUDY_GRID = parse_beta_grid("0.05:0.05:1.0")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def case14():
    return load_case14()


@pytest.fixture(scope="session")
def tripped_case(case14):
    """Doubled real demand with G1 out of service."""
    return apply_scenario(case14, study_config())


@pytest.fixture(scope="session")
def precontingency_solution(case14):
    return solve_scenario(case14, ScenarioConfig(load_p_scale=2.0))


@pytest.fixture(scope="session")
def no_equity_solution(case14):
    return solve_scenario(case14, study_config(beta=None))


@pytest.fixture(scope="session")
def study_sweep(case14):
    return sweep_beta(case14, study_config(), STUDY_GRID)


_ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
