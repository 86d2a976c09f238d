import numpy as np
import pytest

from tvsdp.problem import make_synthetic_tv


def random_orthogonal(rng, r):
    Q, R = np.linalg.qr(rng.standard_normal((r, r)))
    return Q * np.sign(np.diag(R))


def random_skew(rng, r):
    M = rng.standard_normal((r, r))
    return M - M.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic():
    return make_synthetic_tv(8, 2, 5, seed=0)


@pytest.fixture(scope="session")
def synthetic_family():
    return [make_synthetic_tv(8, 2, 5, seed=s) for s in range(10)]


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
