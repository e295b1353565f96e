import numpy as np
import pytest

from rsma_ris_swipt.metrics import TransmitDesign
from rsma_ris_swipt.scenario import ChannelSet, ScenarioConfig, generate_channels


def crandn(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_design(rng, Nt, K, J, power=1.0, common_rates=None):
    d = TransmitDesign(crandn(rng, Nt), crandn(rng, Nt, K), crandn(rng, Nt, J),
                       np.zeros(K) if common_rates is None else common_rates)
    return d.scaled(np.sqrt(power / d.power))


def random_channels(rng, Nt=2, K=2, J=2, N=4, direct=1.0, reflected=1.0):
    return ChannelSet(
        H=crandn(rng, N, Nt, scale=reflected), h_d=crandn(rng, K, Nt, scale=direct),
        g_d=crandn(rng, J, Nt, scale=direct), h_r=crandn(rng, K, N, scale=reflected),
        g_r=crandn(rng, J, N, scale=reflected),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def default_channels(default_cfg):
    return generate_channels(default_cfg, 0)
