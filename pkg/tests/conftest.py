import numpy as np
import pytest

from resguide.kernels import kernel_bank_load
from resguide.synthetic import quadrant_cover, textured_cover


@pytest.fixture(scope="session")
def bank():
    return kernel_bank_load()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cover64():
    return textured_cover(64, seed=3)


@pytest.fixture(scope="session")
def quadrant32():
    return quadrant_cover(32, seed=1)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
