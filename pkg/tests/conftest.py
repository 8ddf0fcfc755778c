import numpy as np
import pytest
from hypothesis import settings

from minhelm import build_grid, oracle_fields, solve_dirichlet

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def plane_wave():
    """(exact, data, material) for the constant-coefficient plane wave."""
    return oracle_fields()


@pytest.fixture(scope="session")
def plane_wave_n30(plane_wave):
    exact, data, material = plane_wave
    return solve_dirichlet(build_grid(30), material, data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """record(tag, ok, detail): print one PASS/FAIL line and fail the test if not ok."""
    def record(tag, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
