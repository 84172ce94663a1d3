import numpy as np
import pytest

from mems_plate.core import FractionalNormContext, ModelParams
from mems_plate.plate import assemble_plate_operator


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def op(params):
    return assemble_plate_operator(params.grid, params.beta, params.tau)


@pytest.fixture(scope="session")
def ctx(op, params):
    return FractionalNormContext.from_operator(op, params.alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bump(params):
    return (1 - params.grid.x**2) ** 2


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
