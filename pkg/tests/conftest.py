import numpy as np
import pytest

from dynfv.synth import gen_identity_population


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_population():
    """Six black identities plus a six-identity pool, fast enough to train on."""
    return gen_identity_population(6, n_pool=6, appearance="black", pool_appearance="black", seed=3, n_tracklets=60,
                                   n_frames=1)


@pytest.fixture(scope="session")
def color_population():
    return gen_identity_population(6, n_pool=6, seed=5, n_tracklets=40, n_frames=2,
                                   color_noise=5.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
