"""Monte Carlo BSDE solvers with applications to claim pricing and constrained log utility."""

__version__ = "0.1.0"

from .market import DegenerateMarketError, MarketModel, MarketPaths, deflator, emm_weights, evolve
from .paths import DiscreteProcess, PathBundle, TimeGrid, make_time_grid, sample_brownian

__all__ = [
    "DegenerateMarketError",
    "DiscreteProcess",
    "MarketModel",
    "MarketPaths",
    "PathBundle",
    "TimeGrid",
    "__version__",
    "deflator",
    "emm_weights",
    "evolve",
    "make_time_grid",
    "sample_brownian",
]
