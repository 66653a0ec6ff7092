import numpy as np
import pytest

from emtomo import Grid, gaussian_packet, density_from_wavefunction


@pytest.fixture(scope="session")
def grid128():
    return Grid.uniform(-12.0, 12.0, 128)


@pytest.fixture(scope="session")
def packet(grid128):
    return gaussian_packet(grid128, 0.3, 0.7, 1.0)


@pytest.fixture(scope="session")
def packet_density(packet):
    return density_from_wavefunction(packet)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
