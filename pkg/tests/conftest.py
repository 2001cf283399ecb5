import numpy as np
import pytest

from femtoslice.channel import SystemParams, sample_fading, sample_topology, snr_to_noise

# Acceptance lines collected by tests/test_acceptance.py, printed at the end.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def rand_c(rng, *shape):
    """CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def small_params():
    return SystemParams(num_macro_users=2, num_femto_users=2, num_subchannels=3)


def draw(params, seed, snr_db=30.0):
    """(topology, realization, sigma2) for a seeded scenario."""
    r = np.random.default_rng(seed)
    topo = sample_topology(params, r)
    fad = sample_fading(params, r)
    return topo, fad, snr_to_noise(snr_db, params.tx_power_macro)
