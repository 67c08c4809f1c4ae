"""European claims: complete-market pricing, hedging and the borrowing-rate market."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .bsde.regression import RegressionBasis
from .bsde.solvers import BsdeProblem, LinearDriverSpec, solve_backward_euler, solve_linear
from .market import Coefficient, MarketModel, MarketPaths, deflator, emm_weights, evolve
from .paths import DiscreteProcess, PathBundle, constant_process, log_stochastic_exponential


class ClaimDataError(ValueError):
    """The claim is negative, non-finite or not square-integrable on the sample."""


@dataclass(frozen=True)
class ClaimSpec:
    payoff: Callable[[np.ndarray], np.ndarray]
    label: str = "claim"

    def values(self, market: MarketPaths) -> np.ndarray:
        xi = np.broadcast_to(np.asarray(self.payoff(market.state(-1)), dtype=float), (market.bundle.n_paths,))
        if not np.all(np.isfinite(xi)):
            raise ClaimDataError(f"{self.label}: payoff is not finite on every path")
        if np.any(xi < 0):
            raise ClaimDataError(f"{self.label}: payoff must be non-negative")
        if not np.isfinite(np.mean(xi**2)):
            raise ClaimDataError(f"{self.label}: sample second moment is infinite")
        return xi


def call(strike: float, asset: int = 0) -> ClaimSpec:
    return ClaimSpec(lambda s: np.maximum(s[:, asset] - strike, 0.0), f"call K={strike:g}")


def put(strike: float, asset: int = 0) -> ClaimSpec:
    return ClaimSpec(lambda s: np.maximum(strike - s[:, asset], 0.0), f"put K={strike:g}")


def bond(face: float = 1.0) -> ClaimSpec:
    return ClaimSpec(lambda s: np.full(s.shape[0], float(face)), "zero-coupon bond")


def digital(strike: float, asset: int = 0) -> ClaimSpec:
    return ClaimSpec(lambda s: (s[:, asset] > strike).astype(float), f"digital K={strike:g}")


def stock(asset: int = 0) -> ClaimSpec:
    return ClaimSpec(lambda s: s[:, asset].copy(), f"asset {asset + 1}")


@dataclass(frozen=True, eq=False)
class PriceReport:
    price: float
    stderr: float
    method: str
    wealth: Optional[DiscreteProcess] = None
    hedge: Optional[DiscreteProcess] = None  # pi: money held in each risky asset
    details: dict = field(default_factory=dict)


def node_lookup(grid, values: np.ndarray) -> Callable:
    """Coefficient callable returning ``values[:, k]`` at ``t = t_k``."""

    def coef(t, state):
        return values[:, int(np.searchsorted(grid.times, t))]

    return coef


def _mean_se(samples: np.ndarray):
    return float(np.mean(samples)), float(np.std(samples) / np.sqrt(samples.size))


def fair_price(
    claim: ClaimSpec,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
    hedge: bool = True,
) -> PriceReport:
    """``E[xi H_T]`` plus, when ``d = n``, the replicating wealth and portfolio.

    The wealth ``X`` solves the linear BSDE with ``beta = -r`` and
    ``gamma = -theta``; the holdings are ``pi = (sigma*)^{-1} Z``.
    """
    market = evolve(model, bundle) if market is None else market
    xi = claim.values(market)
    H = deflator(model, bundle, 0, market=market)
    price, se = _mean_se(xi * H.terminal)
    if not hedge:
        return PriceReport(price, se, "deflator")
    if model.d < model.n:
        return PriceReport(price, se, "deflator", details={"hedge": "unavailable: d < n"})
    grid = bundle.grid
    spec = LinearDriverSpec(
        phi=0.0,
        beta=node_lookup(grid, -market.rate),
        gamma=node_lookup(grid, -market.theta),
    )
    sol = solve_linear(spec, xi, model, bundle, basis, market=market)
    pi = np.linalg.solve(np.swapaxes(market.sigma, -1, -2), sol.Z.vector()[..., None])[..., 0]
    return PriceReport(
        price,
        se,
        "deflator",
        wealth=sol.Y,
        hedge=DiscreteProcess(grid, pi),
        details={"bsde_y0": sol.y0, "bsde_y0_stderr": sol.y0_stderr, "Z": sol.Z},
    )


def emm_price(claim: ClaimSpec, model: MarketModel, bundle: PathBundle, market: Optional[MarketPaths] = None) -> PriceReport:
    """Risk-neutral expectation of the discounted claim."""
    market = evolve(model, bundle) if market is None else market
    xi = claim.values(market)
    w = emm_weights(model, bundle, market=market)
    price, se = _mean_se(w * market.discount()[:, -1] * xi)
    return PriceReport(price, se, "emm")


def hedge_replay(report: PriceReport, model: MarketModel, bundle: PathBundle, market=None, x0: Optional[float] = None):
    """Run the wealth equation forward with the extracted portfolio.

    Returns the terminal wealth on every path.  The starting wealth is the
    BSDE value at time 0 unless ``x0`` is given.
    """
    if report.hedge is None:
        raise ValueError("report carries no hedge")
    market = evolve(model, bundle) if market is None else market
    grid = bundle.grid
    Z = report.details["Z"].vector()
    x = np.full(bundle.n_paths, report.wealth.values[0, 0] if x0 is None else x0)
    for k in range(grid.steps):
        dW = bundle.increments[:, k]
        x = x + market.rate[:, k] * x * grid.dt[k] + np.einsum("pn,pn->p", Z[:, k], market.theta[:, k] * grid.dt[k] + dW)
    return x


def with_rate(model: MarketModel, R: Coefficient) -> MarketModel:
    """Same appreciation rates and volatility, short rate replaced by ``R``."""
    if callable(R) or callable(model.rate) or callable(model.excess):
        def excess(t, s, m=model):
            r = m.rate(t, s) if callable(m.rate) else m.rate
            e = m.excess(t, s) if callable(m.excess) else m.excess
            RR = R(t, s) if callable(R) else R
            return np.asarray(e) + (np.asarray(r) - np.asarray(RR))[..., None]
        return replace(model, rate=R, excess=excess, excess_bound=None, rate_bound=None)
    return replace(model, rate=float(R), excess=model.excess + model.rate - float(R))


def _borrow_rates(model, R, market):
    grid = market.bundle.grid
    N = market.bundle.n_paths
    Rv = np.empty((N, grid.steps + 1))
    for k in range(grid.steps + 1):
        Rv[:, k] = np.broadcast_to(np.asarray(R(grid.times[k], market.state(k)) if callable(R) else R, dtype=float), (N,))
    if np.any(Rv < market.rate - 1e-15):
        raise ValueError("borrowing rate R must be at least the lending rate r everywhere")
    if model.d != model.n:
        raise ValueError("the borrowing-rate market needs a square, invertible volatility")
    return Rv


def _inverse_sigma_ones(market: MarketPaths) -> np.ndarray:
    ones = np.ones(market.sigma.shape[:-1])
    return np.linalg.solve(market.sigma, ones[..., None])[..., 0]


def borrowing_driver(market: MarketPaths, Rv: np.ndarray):
    """``b(t,y,z) = -r y - theta.z + (R - r)(y - (sigma^{-1} 1).z)^-`` and its Lipschitz constant."""
    grid = market.bundle.grid
    u = _inverse_sigma_ones(market)
    spread = Rv - market.rate

    def driver(t, state, y, z):
        k = int(np.searchsorted(grid.times, t))
        short = np.maximum(-(y - np.einsum("pn,pn->p", u[:, k], z)), 0.0)
        return -market.rate[:, k] * y - np.einsum("pn,pn->p", market.theta[:, k], z) + spread[:, k] * short

    cy = float(np.max(np.maximum(np.abs(market.rate), np.abs(Rv))))
    cz = float(np.max(np.linalg.norm(market.theta, axis=-1) + spread * np.linalg.norm(u, axis=-1)))
    return driver, max(cy, cz)


def borrowing_price(
    claim: ClaimSpec,
    model: MarketModel,
    R: Coefficient,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
) -> PriceReport:
    """Price with a higher rate ``R`` on negative bank holdings (nonlinear BSDE)."""
    market = evolve(model, bundle) if market is None else market
    Rv = _borrow_rates(model, R, market)
    xi = claim.values(market)
    driver, C = borrowing_driver(market, Rv)
    sol = solve_backward_euler(BsdeProblem(driver, xi, C), model, bundle, basis, market=market)
    return PriceReport(sol.y0, sol.y0_stderr, "borrowing-bsde", wealth=sol.Y, details={"lipschitz": C, "Z": sol.Z})


def dual_betas(R: float, r: float, points: int = 21) -> np.ndarray:
    return np.linspace(-R, -r, points)


def borrowing_price_dual(
    claim: ClaimSpec,
    model: MarketModel,
    R: Coefficient,
    betas: Sequence[float],
    bundle: PathBundle,
    market: Optional[MarketPaths] = None,
) -> PriceReport:
    """``max over beta of E[G^beta_T xi]`` over fictitious markets with rate ``-beta``.

    ``G^beta = E(int beta dt - int (theta + (beta + r) sigma^{-1} 1) . dW)``.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if betas.size == 0:
        raise ValueError("beta grid is empty")
    market = evolve(model, bundle) if market is None else market
    Rv = _borrow_rates(model, R, market)
    if np.any(betas[:, None, None] < -Rv[None] - 1e-15) or np.any(betas[:, None, None] > -market.rate[None] + 1e-15):
        raise ValueError("every beta must lie in [-R, -r] on all nodes")
    xi = claim.values(market)
    grid = bundle.grid
    u = _inverse_sigma_ones(market)
    prices, ses = [], []
    for b in betas:
        drift = constant_process(grid, bundle.n_paths, b)
        vol = DiscreteProcess(grid, -(market.theta + (b + market.rate)[..., None] * u))
        G = np.exp(log_stochastic_exponential(drift, vol, bundle)[:, -1])
        p, s = _mean_se(G * xi)
        prices.append(p)
        ses.append(s)
    best = int(np.argmax(prices))
    return PriceReport(
        prices[best],
        ses[best],
        "borrowing-dual",
        details={"betas": betas, "prices": np.array(prices), "stderrs": np.array(ses), "argmax_beta": float(betas[best])},
    )
