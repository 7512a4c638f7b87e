import numpy as np
import pytest

from ccslab.denoiser import AnalyticMixtureDenoiser, MixtureParams
from ccslab.schedule import make_schedule


@pytest.fixture(scope="session")
def schedule():
    return make_schedule(1000, 1e-4, 2e-2)


@pytest.fixture(scope="session")
def mix2d():
    # two-component 2-D mixture used throughout the denoiser checks
    return MixtureParams(np.array([0.3, 0.7]), np.array([[-1.0, 0.0], [2.0, 1.0]]), np.array([0.1, 0.2]))


@pytest.fixture(scope="session")
def mix_model(mix2d, schedule):
    return AnalyticMixtureDenoiser(mix2d, schedule)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
