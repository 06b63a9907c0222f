import numpy as np
import pytest


def random_spd(rng, M, scale=1.0, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((M, M)))
    lam = scale * np.exp(rng.uniform(0.0, np.log(cond), size=M))
    return (Q * lam) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
