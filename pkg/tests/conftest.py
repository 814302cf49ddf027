import numpy as np
import pytest

from spike_spectra.model import basis_vector, build_model


@pytest.fixture
def single_spike():
    """M=250, N=500, d=2 along e_1."""
    return build_model(250, 500, [(2.0, basis_vector(250, 1))])


def random_orthonormal(rng, M, r):
    q, _ = np.linalg.qr(rng.standard_normal((M, r)))
    return q


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
