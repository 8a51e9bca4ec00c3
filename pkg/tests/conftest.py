import numpy as np
import pytest


def random_hermitian(rng, n, real=False):
    A = rng.standard_normal((n, n))
    if not real:
        A = A + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def random_psd(rng, n, rank=None, real=False):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank))
    if not real:
        G = G + 1j * rng.standard_normal((n, rank))
    return G @ G.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
