import numpy as np
import pytest

from platehomog import cells, coefficients


@pytest.fixture(scope="session")
def iso_cell():
    """Constant isotropic lambda = mu = 1 on the 64 x 64 cell mesh."""
    return cells.compute_cell(coefficients.preset("isotropic_unit"), n=64)


@pytest.fixture(scope="session")
def trig_iso_cell():
    return cells.compute_cell(coefficients.preset("trig_isotropic"), n=32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_record():
    """Collects one summary line per acceptance criterion."""
    return _ACCEPTANCE.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
