import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian  # noqa: E402
from bsdelab.bsde import RegressionBasis  # noqa: E402


@pytest.fixture(scope="session")
def bs_model():
    """r = 5%, vol 20%, appreciation 11% (premium 0.3), S0 = 100."""
    return MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)


@pytest.fixture(scope="session")
def bs_bundle():
    return sample_brownian(make_time_grid(1.0, 50), 1, 100_000, seed=7)


@pytest.fixture(scope="session")
def bs_market(bs_model, bs_bundle):
    return evolve(bs_model, bs_bundle)


@pytest.fixture(scope="session")
def small_bundle():
    return sample_brownian(make_time_grid(1.0, 20), 1, 20_000, seed=11)


@pytest.fixture(scope="session")
def small_market(bs_model, small_bundle):
    return evolve(bs_model, small_bundle)


@pytest.fixture(scope="session")
def basis():
    return RegressionBasis()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
