"""The bank account plus ``d`` risky assets driven by ``n`` Brownian motions.

Coefficients are either constants or callables ``(t, prices) -> array``
where ``prices`` holds the risky asset prices of every path at time ``t``,
shape ``(n_paths, d)``.  The model stores the *excess* appreciation
``b - r 1`` so the risk premium always solves ``sigma theta = excess``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .paths import DiscreteProcess, PathBundle, constant_process, log_stochastic_exponential

Coefficient = Union[float, np.ndarray, Callable[[float, np.ndarray], np.ndarray]]

_DEGENERACY_COND = 1e12


class DegenerateMarketError(ArithmeticError):
    """``sigma sigma*`` is numerically singular somewhere on the grid."""


@dataclass(frozen=True, eq=False)
class MarketModel:
    rate: Coefficient
    excess: Coefficient
    sigma: Coefficient
    s0: Union[float, np.ndarray] = 1.0
    d: Optional[int] = None
    n: Optional[int] = None
    rate_bound: Optional[float] = None
    excess_bound: Optional[float] = None
    sigma_bound: Optional[float] = None
    ellipticity: Optional[tuple] = None  # (eps, K)

    def __post_init__(self):
        d, n = self.d, self.n
        if not callable(self.sigma):
            s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            object.__setattr__(self, "sigma", s)
            d = s.shape[0] if d is None else d
            n = s.shape[1] if n is None else n
            if s.shape != (d, n):
                raise ValueError(f"sigma has shape {s.shape}, expected ({d}, {n})")
        if not callable(self.excess):
            e = np.atleast_1d(np.asarray(self.excess, dtype=float))
            object.__setattr__(self, "excess", e)
            d = e.size if d is None else d
            if e.shape != (d,):
                raise ValueError(f"excess appreciation has shape {e.shape}, expected ({d},)")
        if d is None or n is None:
            raise ValueError("d and n must be given when sigma is a callable")
        if d > n:
            raise ValueError(f"need d <= n, got d={d}, n={n}")
        if not callable(self.rate):
            object.__setattr__(self, "rate", float(self.rate))
        s0 = np.broadcast_to(np.asarray(self.s0, dtype=float), (d,)).copy()
        if np.any(s0 <= 0):
            raise ValueError("initial prices must be positive")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "n", int(n))

    @classmethod
    def black_scholes(cls, r: float, mu, sigma, s0=1.0) -> "MarketModel":
        """Constant-coefficient model from appreciation rates ``mu``."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return cls(rate=r, excess=mu - r, sigma=sigma, s0=s0)

    @property
    def is_constant(self) -> bool:
        return not any(callable(c) for c in (self.rate, self.excess, self.sigma))

    def coefficients(self, t: float, prices: np.ndarray):
        """``(r, excess, sigma)`` with shapes ``(N,)``, ``(N, d)``, ``(N, d, n)``."""
        N = prices.shape[0]
        r = _evaluate(self.rate, t, prices, (N,))
        e = _evaluate(self.excess, t, prices, (N, self.d))
        s = _evaluate(self.sigma, t, prices, (N, self.d, self.n))
        _check_bound(r, self.rate_bound, "short rate", t)
        _check_bound(e, self.excess_bound, "excess appreciation", t)
        _check_bound(s, self.sigma_bound, "volatility", t)
        return r, e, s


def _evaluate(c: Coefficient, t: float, prices: np.ndarray, shape: tuple) -> np.ndarray:
    value = c(t, prices) if callable(c) else c
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


def _check_bound(values: np.ndarray, bound: Optional[float], name: str, t: float):
    if bound is not None and np.max(np.abs(values)) > bound * (1 + 1e-12):
        raise ValueError(f"{name} exceeds its declared bound {bound} at t={t:g}")


def check_ellipticity(model: MarketModel, horizon: float, n_samples: int = 1000, seed: int = 0):
    """Check ``eps|x| <= |sigma* x| <= K|x|`` at sampled ``(t, prices)`` points.

    Returns the observed ``(min, max)`` singular values of ``sigma``; raises
    ``ValueError`` when they leave the declared band.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, horizon, n_samples)
    prices = model.s0 * np.exp(rng.normal(0.0, 1.0, (n_samples, model.d)))
    sv = np.empty((n_samples, model.d))
    for i in range(n_samples):
        _, _, s = model.coefficients(t[i], prices[i : i + 1])
        sv[i] = np.linalg.svd(s[0], compute_uv=False)
    lo, hi = float(sv.min()), float(sv.max())
    if model.ellipticity is not None:
        eps, K = model.ellipticity
        if lo < eps or hi > K:
            raise ValueError(
                f"sigma singular values span [{lo:.4g}, {hi:.4g}], outside declared [{eps}, {K}]"
            )
    return lo, hi


def premium(excess: np.ndarray, sigma: np.ndarray, node: Optional[int] = None) -> np.ndarray:
    """Minimal-norm ``theta`` with ``sigma theta = excess``, batched over paths.

    ``excess`` has shape ``(..., d)`` and ``sigma`` ``(..., d, n)``.
    """
    gram = sigma @ np.swapaxes(sigma, -1, -2)
    cond = np.linalg.cond(gram)
    singular = ~np.isfinite(cond) | (cond > _DEGENERACY_COND)
    if np.any(singular):
        # zero excess needs no premium even when sigma degenerates
        excess_b = np.broadcast_to(excess, singular.shape + excess.shape[-1:])
        if np.any(excess_b[singular] != 0):
            where = "" if node is None else f" at node {node}"
            raise DegenerateMarketError(f"sigma sigma* is singular{where} (cond={np.max(cond):.3g})")
        gram = np.where(singular[..., None, None], np.eye(gram.shape[-1]), gram)
    w = np.linalg.solve(gram, excess[..., None])
    theta = (np.swapaxes(sigma, -1, -2) @ w)[..., 0]
    return np.where(singular[..., None], 0.0, theta) if np.any(singular) else theta


@dataclass(frozen=True, eq=False)
class MarketPaths:
    """Simulated prices and the coefficients seen along every path."""

    bundle: PathBundle
    risky: np.ndarray  # (N, K+1, d)
    bank: np.ndarray  # (N, K+1)
    rate: np.ndarray  # (N, K+1)
    theta: np.ndarray  # (N, K+1, n)
    sigma: np.ndarray  # (N, K+1, d, n)

    @property
    def prices(self) -> DiscreteProcess:
        return DiscreteProcess(self.bundle.grid, np.concatenate([self.bank[:, :, None], self.risky], axis=2))

    def state(self, k: int) -> np.ndarray:
        return self.risky[:, k, :]

    def discount(self) -> np.ndarray:
        """``exp(-int_0^t r ds)`` on every node."""
        return 1.0 / self.bank


def _simulate(model: MarketModel, bundle: PathBundle):
    """Prices and coefficients along every path, without the risk premium."""
    if bundle.dim != model.n:
        raise ValueError(f"model needs {model.n} Brownian motions, bundle has {bundle.dim}")
    grid = bundle.grid
    N, K = bundle.n_paths, grid.steps
    dt = grid.dt
    if model.is_constant:
        r, e, s = model.coefficients(0.0, model.s0[None, :])
        b = r[0] + e[0]
        drift = b - 0.5 * np.sum(s[0] ** 2, axis=1)
        steps = drift[None, None, :] * dt[None, :, None] + bundle.increments @ s[0].T
        logp = np.zeros((N, K + 1, model.d))
        np.cumsum(steps, axis=1, out=logp[:, 1:, :])
        risky = model.s0 * np.exp(logp)
        rate = np.broadcast_to(r[0], (N, K + 1))
        excess = np.broadcast_to(e[0], (N, K + 1, model.d))
        sigma = np.broadcast_to(s[0], (N, K + 1, model.d, model.n))
    else:
        risky = np.empty((N, K + 1, model.d))
        rate = np.empty((N, K + 1))
        excess = np.empty((N, K + 1, model.d))
        sigma = np.empty((N, K + 1, model.d, model.n))
        logp = np.broadcast_to(np.log(model.s0), (N, model.d)).copy()
        for k in range(K + 1):
            p = np.exp(logp)
            risky[:, k] = p
            r, e, s = model.coefficients(grid.times[k], p)
            rate[:, k], excess[:, k], sigma[:, k] = r, e, s
            if k < K:
                b = r[:, None] + e
                logp += (b - 0.5 * np.sum(s**2, axis=2)) * dt[k]
                logp += np.einsum("pdn,pn->pd", s, bundle.increments[:, k])
    logbank = np.zeros((N, K + 1))
    np.cumsum(rate[:, :-1] * dt, axis=1, out=logbank[:, 1:])
    return risky, np.exp(logbank), rate, excess, sigma


def evolve(model: MarketModel, bundle: PathBundle) -> MarketPaths:
    """Simulate the market on ``bundle`` (log-Euler for the risky assets)."""
    risky, bank, rate, excess, sigma = _simulate(model, bundle)
    N, K1 = rate.shape
    if model.is_constant:
        theta = np.broadcast_to(premium(excess[0, 0], sigma[0, 0]), (N, K1, model.n))
    else:
        theta = np.empty((N, K1, model.n))
        for k in range(K1):
            theta[:, k] = premium(excess[:, k], sigma[:, k], node=k)
    return MarketPaths(bundle, risky, bank, rate, theta, sigma)


def simulate_prices(model: MarketModel, bundle: PathBundle) -> DiscreteProcess:
    """Bank account and risky prices, shape ``(N, K+1, d+1)``; column 0 is the bank.

    Needs no risk premium, so it also works for degenerate volatility.
    """
    risky, bank, *_ = _simulate(model, bundle)
    return DiscreteProcess(bundle.grid, np.concatenate([bank[:, :, None], risky], axis=2))


def risk_premium(model: MarketModel, bundle: PathBundle, market: Optional[MarketPaths] = None) -> DiscreteProcess:
    market = evolve(model, bundle) if market is None else market
    return DiscreteProcess(bundle.grid, market.theta)


@dataclass(frozen=True, eq=False)
class DeflatorPaths:
    """``H^s_t`` for nodes ``t >= s``; column ``j`` holds node ``s + j``."""

    base: int
    values: np.ndarray  # (N, K+1-base)

    def at(self, k: int) -> np.ndarray:
        if k < self.base:
            raise IndexError(f"deflator started at node {self.base} is undefined at node {k}")
        return self.values[:, k - self.base]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def _log_deflator(market: MarketPaths) -> np.ndarray:
    grid = market.bundle.grid
    drift = DiscreteProcess(grid, -market.rate)
    vol = DiscreteProcess(grid, -market.theta)
    return log_stochastic_exponential(drift, vol, market.bundle)


def deflator(model: MarketModel, bundle: PathBundle, s: int = 0, market: Optional[MarketPaths] = None) -> DeflatorPaths:
    """``E(-int_s r du - int_s theta . dW)`` on nodes ``s..K``."""
    K = bundle.grid.steps
    if not 0 <= s <= K:
        raise ValueError(f"base node {s} outside 0..{K}")
    market = evolve(model, bundle) if market is None else market
    logh = _log_deflator(market)
    return DeflatorPaths(s, np.exp(logh[:, s:] - logh[:, s : s + 1]))


def emm_weights(model: MarketModel, bundle: PathBundle, market: Optional[MarketPaths] = None) -> np.ndarray:
    """Per-path density ``dQ/dP = exp(int r) H_T = E(-int theta . dW)_T``."""
    market = evolve(model, bundle) if market is None else market
    zero = constant_process(bundle.grid, bundle.n_paths, 0.0)
    vol = DiscreteProcess(bundle.grid, -market.theta)
    return np.exp(log_stochastic_exponential(zero, vol, bundle)[:, -1])
