import numpy as np
import pytest

from fdilab.grid import MeasurementConfig, NoiseModel, build_h_matrix, load_case39


@pytest.fixture(scope="session")
def case39():
    return load_case39()


@pytest.fixture(scope="session")
def h39(case39):
    return build_h_matrix(case39, MeasurementConfig.default(case39))


@pytest.fixture(scope="session")
def noise39(h39):
    return NoiseModel.uniform(h39.m, 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def acceptance():
    """record(n, name, ok, detail) stores one line for the terminal summary."""

    def record(n, name, ok, detail=""):
        ACCEPTANCE[n] = (name, bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        if n not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {n} [----] not run, or raised before reaching its check")
            continue
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
