"""Log-utility maximization with portfolio constraints.

Fractions of wealth ``c`` held in the risky assets must lie in a closed set
``C``.  The optimal exposure ``rho = sigma* c`` is the point of
``sigma* C`` nearest to the risk premium, and the value is
``log x + E[int (r + |theta|^2/2 - dist(theta, sigma* C)^2 / 2) dt]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .market import MarketModel, MarketPaths, evolve
from .paths import DiscreteProcess, PathBundle, log_stochastic_exponential, stochastic_exponential

PGD_MAX_ITERS = 500
PGD_TOL = 1e-10
POWER_ITERS = 20


@dataclass(frozen=True)
class FullSpace:
    d: int

    def project(self, c: np.ndarray) -> np.ndarray:
        return c

    def contains(self, c: np.ndarray) -> np.ndarray:
        return np.ones(c.shape[:-1], dtype=bool)

    def sample(self, rng, size: int) -> np.ndarray:
        return rng.normal(0.0, 3.0, (size, self.d))

    def anchor(self) -> np.ndarray:
        return np.zeros(self.d)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lower <= upper with matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    def project(self, c):
        return np.clip(c, self.lower, self.upper)

    def contains(self, c):
        return np.all((c >= self.lower) & (c <= self.upper), axis=-1)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, (size, self.d))

    def anchor(self):
        return np.clip(np.zeros(self.d), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if self.radius < 0:
            raise ValueError("ball radius must be non-negative")

    @property
    def d(self) -> int:
        return self.center.size

    def project(self, c):
        off = c - self.center
        norm = np.linalg.norm(off, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.radius / np.maximum(norm, 1e-300))
        return self.center + off * scale

    def contains(self, c):
        return np.linalg.norm(c - self.center, axis=-1) <= self.radius * (1 + 1e-12) + 1e-15

    def sample(self, rng, size):
        u = rng.normal(size=(size, self.d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + u * self.radius * rng.uniform(0, 1, (size, 1)) ** (1.0 / self.d)

    def anchor(self):
        return self.center.copy()


@dataclass(frozen=True, eq=False)
class FinitePointSet:
    """Non-convex constraint: finitely many allowed fraction vectors."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pts = pts[:, None] if pts.ndim == 1 else pts
        if pts.shape[0] == 0:
            raise ValueError("point set must be non-empty")
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def project(self, c):
        dist = np.linalg.norm(c[..., None, :] - self.points, axis=-1)
        return self.points[np.argmin(dist, axis=-1)]

    def contains(self, c):
        return np.any(np.all(c[..., None, :] == self.points, axis=-1), axis=-1)

    def sample(self, rng, size):
        return self.points[rng.integers(0, self.points.shape[0], size)]

    def anchor(self):
        return self.points[0].copy()


ConstraintSet = Union[FullSpace, Box, Ball, FinitePointSet]


@dataclass(frozen=True, eq=False)
class Projection:
    distance: np.ndarray  # (...,)
    rho: np.ndarray  # (..., n) nearest point of sigma* C
    fraction: np.ndarray  # (..., d) achieving element of C
    converged: bool = True
    iterations: int = 0


def _largest_eig(gram: np.ndarray) -> np.ndarray:
    v = np.ones(gram.shape[:-1])
    for _ in range(POWER_ITERS):
        v = np.einsum("...ij,...j->...i", gram, v)
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
    lam = np.einsum("...i,...ij,...j->...", v, gram, v)
    # guard the power-iteration estimate from below by the trace bound
    return np.maximum(lam, np.trace(gram, axis1=-2, axis2=-1) / gram.shape[-1])


def constraint_distance(theta: np.ndarray, sigma: np.ndarray, constraint: ConstraintSet) -> Projection:
    """Minimize ``|theta - sigma* c|`` over ``c`` in ``constraint``.

    Batched: ``theta`` is ``(..., n)`` and ``sigma`` ``(..., d, n)``.  Box
    and ball use projected gradient with step ``1/L``; point sets are
    enumerated with ties going to the lowest index.
    """
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    batch = np.broadcast_shapes(theta.shape[:-1], sigma.shape[:-2])
    d, n = sigma.shape[-2:]
    theta = np.broadcast_to(theta, batch + (n,))
    sigma = np.broadcast_to(sigma, batch + (d, n))
    st = np.swapaxes(sigma, -1, -2)
    converged, iters = True, 0
    if isinstance(constraint, FullSpace):
        gram = sigma @ st
        c = np.linalg.solve(gram, (sigma @ theta[..., None]))[..., 0]
    elif isinstance(constraint, FinitePointSet):
        rho_all = np.einsum("...nd,md->...mn", st, constraint.points)
        dist = np.linalg.norm(theta[..., None, :] - rho_all, axis=-1)
        c = constraint.points[np.argmin(dist, axis=-1)]
    else:
        gram = sigma @ st
        step = 1.0 / _largest_eig(gram)[..., None]
        target = (sigma @ theta[..., None])[..., 0]
        c = constraint.project(np.broadcast_to(constraint.anchor(), batch + (d,)).copy())
        converged = False
        for iters in range(1, PGD_MAX_ITERS + 1):
            grad = (gram @ c[..., None])[..., 0] - target
            new = constraint.project(c - step * grad)
            mapping = np.max(np.abs(new - c) / step) if new.size else 0.0
            c = new
            if mapping < PGD_TOL:
                converged = True
                break
        if not converged:
            warnings.warn(f"projected gradient stopped after {PGD_MAX_ITERS} iterations", RuntimeWarning)
    rho = (st @ c[..., None])[..., 0]
    dist = np.linalg.norm(theta - rho, axis=-1)
    return Projection(dist, rho, c, converged, iters)


def _per_node_projection(market: MarketPaths, constraint: ConstraintSet, model: MarketModel) -> Projection:
    if model.is_constant:
        p = constraint_distance(market.theta[0, 0], market.sigma[0, 0], constraint)
        N, K1 = market.rate.shape
        return Projection(
            np.broadcast_to(p.distance, (N, K1)),
            np.broadcast_to(p.rho, (N, K1) + p.rho.shape),
            np.broadcast_to(p.fraction, (N, K1) + p.fraction.shape),
            p.converged,
            p.iterations,
        )
    return constraint_distance(market.theta, market.sigma, constraint)


def _check_dims(model: MarketModel, constraint: ConstraintSet):
    if constraint.d != model.d:
        raise ValueError(f"constraint set lives in R^{constraint.d}, market has {model.d} risky assets")


def log_utility_driver(model: MarketModel, constraint: ConstraintSet, bundle: PathBundle, market=None) -> DiscreteProcess:
    """``f(t) = r + |theta|^2 / 2 - dist(theta, sigma* C)^2 / 2`` on every node."""
    _check_dims(model, constraint)
    market = evolve(model, bundle) if market is None else market
    proj = _per_node_projection(market, constraint, model)
    f = market.rate + 0.5 * np.sum(market.theta**2, axis=-1) - 0.5 * proj.distance**2
    return DiscreteProcess(bundle.grid, f)


def driver_bound(model: MarketModel, constraint: ConstraintSet, rate_bound: float, premium_bound: float, vol_bound: float) -> float:
    """``M1 + M2^2/2 + (M2 + K|c|)^2/2`` for an element ``c`` of the set."""
    c = np.linalg.norm(constraint.anchor())
    return rate_bound + 0.5 * premium_bound**2 + 0.5 * (premium_bound + vol_bound * c) ** 2


@dataclass(frozen=True, eq=False)
class UtilityReport:
    value: float
    stderr: float
    driver: DiscreteProcess
    rho: DiscreteProcess  # optimal exposure sigma* c
    fraction: DiscreteProcess  # optimal fractions c
    details: dict = field(default_factory=dict)


def log_utility_value(x: float, model: MarketModel, constraint: ConstraintSet, bundle: PathBundle, market=None) -> UtilityReport:
    """Optimal expected log terminal wealth from initial wealth ``x``."""
    if not x > 0:
        raise ValueError(f"initial wealth must be positive, got {x}")
    _check_dims(model, constraint)
    market = evolve(model, bundle) if market is None else market
    grid = bundle.grid
    proj = _per_node_projection(market, constraint, model)
    f = market.rate + 0.5 * np.sum(market.theta**2, axis=-1) - 0.5 * proj.distance**2
    integral = f[:, :-1] @ grid.dt
    mean = float(np.mean(integral))
    se = float(np.std(integral) / np.sqrt(integral.size))
    return UtilityReport(
        float(np.log(x) + mean),
        se,
        DiscreteProcess(grid, f),
        DiscreteProcess(grid, proj.rho),
        DiscreteProcess(grid, proj.fraction),
        {"projection_converged": proj.converged, "projection_iterations": proj.iterations},
    )


def wealth_from_fraction(x: float, rho: DiscreteProcess, model: MarketModel, bundle: PathBundle, market=None) -> DiscreteProcess:
    """``x E(int r dt + int rho . (dW + theta dt))`` for exposure ``rho = sigma* c``."""
    if not x > 0:
        raise ValueError(f"initial wealth must be positive, got {x}")
    market = evolve(model, bundle) if market is None else market
    if not rho.grid.matches(bundle.grid):
        raise ValueError("rho lives on a different time grid than the path bundle")
    r = rho.vector()
    drift = market.rate + np.einsum("pkn,pkn->pk", r, np.broadcast_to(market.theta, r.shape))
    X = stochastic_exponential(DiscreteProcess(bundle.grid, drift), rho, bundle)
    return DiscreteProcess(bundle.grid, x * X.values)


def log_wealth_terminal(x: float, rho: DiscreteProcess, model: MarketModel, bundle: PathBundle, market=None) -> np.ndarray:
    """``log X_T`` computed without exponentiating."""
    market = evolve(model, bundle) if market is None else market
    r = rho.vector()
    drift = market.rate + np.einsum("pkn,pkn->pk", r, np.broadcast_to(market.theta, r.shape))
    return np.log(x) + log_stochastic_exponential(DiscreteProcess(bundle.grid, drift), rho, bundle)[:, -1]


def fraction_to_exposure(fraction: np.ndarray, market: MarketPaths) -> np.ndarray:
    """``rho = sigma* c`` node by node; ``fraction`` is ``(N, K+1, d)``."""
    return np.einsum("pkdn,pkd->pkn", market.sigma, fraction)


def perturbed_fractions(report: UtilityReport, constraint: ConstraintSet, rng, scale: float = 0.3) -> np.ndarray:
    """Random admissible alternative to the optimal fractions, projected back into the set."""
    c = report.fraction.vector()
    noise = rng.normal(0.0, scale, size=(c.shape[0], 1, c.shape[2])) + rng.normal(0.0, scale, size=c.shape[1:])[None]
    return constraint.project(c + noise)
