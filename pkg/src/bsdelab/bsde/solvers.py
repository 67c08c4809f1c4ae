"""Monte Carlo solvers for ``-dY = f(t, Y, Z) dt - Z* dW``, ``Y_T = xi``.

Drivers are vectorized callables ``f(t, state, y, z)`` with ``state`` the
risky prices ``(N, d)``, ``y`` of shape ``(N,)`` and ``z`` of shape
``(N, n)``; they return ``(N,)``.  Terminal values are either a callable of
the terminal prices or a ready ``(N,)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ..market import Coefficient, MarketModel, MarketPaths, evolve
from ..paths import DiscreteProcess, PathBundle, log_stochastic_exponential
from .regression import Projector, RegressionBasis

Driver = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Terminal = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class StabilityError(ValueError):
    """The explicit scheme needs ``dt * C < 1``."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, ratios):
        super().__init__(message)
        self.ratios = list(ratios)


@dataclass(frozen=True, eq=False)
class BsdeProblem:
    """Data ``(f, xi)`` with a declared Lipschitz constant of ``f`` in ``(y, z)``."""

    driver: Driver
    terminal: Terminal
    lipschitz: float
    zero_bound: Optional[float] = None

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be non-negative")

    def check(self, market: MarketPaths, n_samples: int = 200, seed: int = 0, scale: float = 10.0):
        """Sampled checks of the standing assumptions on the driver.

        ``f(., 0, 0)`` must be finite (and within ``zero_bound`` if given) and
        finite-difference slopes in ``(y, z)`` may not exceed ``1.05 C``.
        Returns the largest observed slope.
        """
        rng = np.random.default_rng(seed)
        grid = market.bundle.grid
        n = market.bundle.dim
        worst = 0.0
        for k in rng.integers(0, grid.steps + 1, size=min(grid.steps + 1, 8)):
            t, state = grid.times[k], market.state(k)
            m = min(n_samples, state.shape[0])
            s = state[:m]
            f0 = self.driver(t, s, np.zeros(m), np.zeros((m, n)))
            if not np.all(np.isfinite(f0)):
                raise ValueError(f"driver is not finite at (y, z) = 0, t={t:g}")
            if self.zero_bound is not None and np.max(np.abs(f0)) > self.zero_bound:
                raise ValueError(f"|f(t, 0, 0)| exceeds declared bound {self.zero_bound} at t={t:g}")
            y1, y2 = rng.uniform(-scale, scale, (2, m))
            z1, z2 = rng.uniform(-scale, scale, (2, m, n))
            num = np.abs(self.driver(t, s, y1, z1) - self.driver(t, s, y2, z2))
            den = np.abs(y1 - y2) + np.linalg.norm(z1 - z2, axis=1)
            worst = max(worst, float(np.max(num / den)))
        if worst > 1.05 * self.lipschitz:
            raise ValueError(
                f"driver slope {worst:.4g} exceeds declared Lipschitz constant {self.lipschitz}"
            )
        return worst


@dataclass(frozen=True)
class LinearDriverSpec:
    """``f = phi + beta y + gamma . z`` with bounded ``beta`` and ``gamma``."""

    phi: Coefficient = 0.0
    beta: Coefficient = 0.0
    gamma: Coefficient = 0.0
    beta_bound: Optional[float] = None
    gamma_bound: Optional[float] = None

    def evaluate(self, t: float, state: np.ndarray, n: int):
        N = state.shape[0]
        phi = _coef(self.phi, t, state, (N,))
        beta = _coef(self.beta, t, state, (N,))
        gamma = _coef(self.gamma, t, state, (N, n))
        if self.beta_bound is not None and np.max(np.abs(beta)) > self.beta_bound:
            raise ValueError(f"beta exceeds its bound {self.beta_bound} at t={t:g}")
        if self.gamma_bound is not None and np.max(np.linalg.norm(gamma, axis=1)) > self.gamma_bound:
            raise ValueError(f"gamma exceeds its bound {self.gamma_bound} at t={t:g}")
        return phi, beta, gamma

    def lipschitz(self) -> float:
        b = self.beta_bound if callable(self.beta) else float(np.max(np.abs(self.beta)))
        g = self.gamma_bound if callable(self.gamma) else float(np.linalg.norm(self.gamma))
        if b is None or g is None:
            raise ValueError("callable beta/gamma need declared bounds")
        return max(b, g)

    def driver(self, n: int) -> Driver:
        def f(t, state, y, z):
            phi, beta, gamma = self.evaluate(t, state, n)
            return phi + beta * y + np.einsum("pn,pn->p", gamma, z)

        return f

    def problem(self, terminal: Terminal, n: int) -> BsdeProblem:
        return BsdeProblem(self.driver(n), terminal, self.lipschitz())

    def scaled(self, c: float) -> "LinearDriverSpec":
        phi = (lambda t, s, p=self.phi: c * np.asarray(p(t, s))) if callable(self.phi) else c * np.asarray(self.phi)
        return LinearDriverSpec(phi, self.beta, self.gamma, self.beta_bound, self.gamma_bound)


def _coef(c: Coefficient, t: float, state: np.ndarray, shape: tuple) -> np.ndarray:
    value = c(t, state) if callable(c) else c
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    Y: DiscreteProcess
    Z: DiscreteProcess
    y_stderr: np.ndarray  # (K+1,)
    diagnostics: dict = field(default_factory=dict)
    # (N, K+1) standard error of each fitted value; its RMS over paths is about y_stderr
    path_stderr: Optional[np.ndarray] = None

    @property
    def y0(self) -> float:
        return float(self.Y.values[0, 0])

    @property
    def y0_stderr(self) -> float:
        return float(self.y_stderr[0])


def terminal_values(xi: Terminal, market: MarketPaths) -> np.ndarray:
    v = xi(market.state(-1)) if callable(xi) else xi
    v = np.broadcast_to(np.asarray(v, dtype=float), (market.bundle.n_paths,)).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("terminal value is not finite on every path")
    return v


class _NodeRegressions:
    """Per-node projectors, built lazily and reused across solves on one bundle."""

    def __init__(self, market: MarketPaths, basis: RegressionBasis):
        self.market = market
        self.basis = basis
        self._cache = {}

    def __getitem__(self, k: int) -> Projector:
        if k not in self._cache:
            N = self.market.bundle.n_paths
            if k == 0:
                X = np.ones((N, 1))
            else:
                X = self.basis.design(self.market.bundle.grid.times[k], self.market.state(k))
            self._cache[k] = Projector(X, self.basis.penalty(N), self.basis.max_condition)
        return self._cache[k]

    def conditions(self):
        return [self._cache[k].condition for k in sorted(self._cache)]


def _node_stderr(resid: np.ndarray, p: int) -> float:
    N = resid.shape[0]
    return float(np.std(resid) * np.sqrt(p / N))


def _path_stderr(resid: np.ndarray, proj: Projector) -> np.ndarray:
    return np.std(resid) * np.sqrt(proj.leverage)


def _market(model: MarketModel, bundle: PathBundle, market: Optional[MarketPaths]) -> MarketPaths:
    if market is None:
        return evolve(model, bundle)
    if market.bundle is not bundle:
        raise ValueError("precomputed market paths belong to a different bundle")
    return market


def solve_linear(
    spec: LinearDriverSpec,
    xi: Terminal,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
    regressions: Optional[_NodeRegressions] = None,
) -> BsdeSolution:
    """Solve a linear BSDE through its adjoint process.

    ``Y_k = E[xi G_K / G_k + sum_{j >= k} G_j / G_k phi_j dt_j | F_k]`` where
    ``G`` is the stochastic exponential of ``int beta dt + int gamma . dW``.
    """
    market = _market(model, bundle, market)
    regs = _NodeRegressions(market, basis) if regressions is None else regressions
    grid = bundle.grid
    N, K, n = bundle.n_paths, grid.steps, bundle.dim
    dt = grid.dt

    phi = np.empty((N, K + 1))
    beta = np.empty((N, K + 1))
    gamma = np.empty((N, K + 1, n))
    for k in range(K + 1):
        phi[:, k], beta[:, k], gamma[:, k] = spec.evaluate(grid.times[k], market.state(k), n)
    log_adj = log_stochastic_exponential(DiscreteProcess(grid, beta), DiscreteProcess(grid, gamma), bundle)
    xi_v = terminal_values(xi, market)

    # tail[:, k] = xi G_K + sum_{j >= k} G_j phi_j dt_j, divided by G_k
    adj = np.exp(log_adj)
    running = xi_v * adj[:, K]
    Y = np.empty((N, K + 1))
    Z = np.zeros((N, K + 1, n))
    se = np.zeros(K + 1)
    path_se = np.zeros((N, K + 1))
    Y[:, K] = xi_v
    targets = np.empty((N, K + 1))
    targets[:, K] = xi_v
    for k in range(K - 1, -1, -1):
        running = running + adj[:, k] * phi[:, k] * dt[k]
        targets[:, k] = running / adj[:, k]
    for k in range(K - 1, -1, -1):
        proj = regs[k]
        Y[:, k] = proj.fit(targets[:, k])
        se[k] = _node_stderr(targets[:, k] - Y[:, k], proj.n_features)
        path_se[:, k] = _path_stderr(targets[:, k] - Y[:, k], proj)
        dY = (Y[:, k + 1] - Y[:, k])[:, None]
        Z[:, k] = proj.fit(dY * bundle.increments[:, k]) / dt[k]
    return BsdeSolution(
        DiscreteProcess(grid, Y),
        DiscreteProcess(grid, Z),
        se,
        {"method": "linear", "conditions": regs.conditions()},
        path_se,
    )


def check_stability(lipschitz: float, grid) -> None:
    step = float(np.max(grid.dt))
    if step * lipschitz >= 1.0:
        need = int(np.ceil(grid.horizon * lipschitz)) + 1
        raise StabilityError(
            f"explicit step unstable: dt*C = {step * lipschitz:.3g} >= 1; use more than {need} steps"
        )


def _backward_sweep(driver_at, xi_v, market, regs, bundle):
    """One explicit backward recursion.  ``driver_at(k, y_hat, z)`` gives ``f`` at node ``k``."""
    grid = bundle.grid
    N, K, n = bundle.n_paths, grid.steps, bundle.dim
    dt = grid.dt
    Y = np.empty((N, K + 1))
    Z = np.zeros((N, K + 1, n))
    se = np.zeros(K + 1)
    path_se = np.zeros((N, K + 1))
    Y[:, K] = xi_v
    for k in range(K - 1, -1, -1):
        proj = regs[k]
        nxt = Y[:, k + 1]
        y_hat = proj.fit(nxt)
        Z[:, k] = proj.fit((nxt - y_hat)[:, None] * bundle.increments[:, k]) / dt[k]
        step = driver_at(k, y_hat, Z[:, k]) * dt[k]
        Y[:, k] = y_hat + step
        se[k] = _node_stderr(nxt - y_hat, proj.n_features)
        path_se[:, k] = _path_stderr(nxt - y_hat, proj)
    return Y, Z, se, path_se


def solve_backward_euler(
    problem: BsdeProblem,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
    regressions: Optional[_NodeRegressions] = None,
) -> BsdeSolution:
    """Explicit regression scheme.

    ``Z_k = E[(Y_{k+1} - E[Y_{k+1}|F_k]) dW_k | F_k] / dt_k`` and
    ``Y_k = E[Y_{k+1}|F_k] + f(t_k, E[Y_{k+1}|F_k], Z_k) dt_k``.
    """
    grid = bundle.grid
    check_stability(problem.lipschitz, grid)
    market = _market(model, bundle, market)
    regs = _NodeRegressions(market, basis) if regressions is None else regressions
    xi_v = terminal_values(problem.terminal, market)

    def driver_at(k, y, z):
        return problem.driver(grid.times[k], market.state(k), y, z)

    Y, Z, se, path_se = _backward_sweep(driver_at, xi_v, market, regs, bundle)
    return BsdeSolution(
        DiscreteProcess(grid, Y),
        DiscreteProcess(grid, Z),
        se,
        {"method": "backward_euler", "conditions": regs.conditions()},
        path_se,
    )


@dataclass(frozen=True)
class PicardConfig:
    weight: float
    max_iters: int = 100
    tol: float = 1e-12


def weighted_norm2(values: np.ndarray, grid, weight: float) -> float:
    """Discrete ``E[int_0^T e^{weight t} |v_t|^2 dt]`` using nodes ``0..K-1``."""
    v = values if values.ndim == 3 else values[:, :, None]
    sq = np.sum(v[:, :-1, :] ** 2, axis=2)
    w = np.exp(weight * grid.times[:-1]) * grid.dt
    return float(np.mean(sq @ w))


def solve_picard(
    problem: BsdeProblem,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    config: PicardConfig,
    market: Optional[MarketPaths] = None,
    regressions: Optional[_NodeRegressions] = None,
) -> BsdeSolution:
    """Fixed-point iteration of the driver-frozen map on one path bundle.

    Starting from ``(y, z) = 0``, each sweep solves the BSDE whose driver is
    ``f(t, y_t, z_t)`` (no dependence on the unknowns).  Iteration stops
    once the squared weighted distance between consecutive iterates falls
    below ``tol`` times the squared weighted norm of the iterate.
    """
    grid = bundle.grid
    T = grid.horizon
    C = problem.lipschitz
    if not config.weight > 2 * (2 + T) * C**2:
        raise ValueError(
            f"weight {config.weight} must exceed 2(2+T)C^2 = {2 * (2 + T) * C**2:.4g}"
        )
    market = _market(model, bundle, market)
    regs = _NodeRegressions(market, basis) if regressions is None else regressions
    xi_v = terminal_values(problem.terminal, market)
    N, K, n = bundle.n_paths, grid.steps, bundle.dim
    y = np.zeros((N, K + 1))
    z = np.zeros((N, K + 1, n))
    gaps, ratios = [], []
    for it in range(1, config.max_iters + 1):
        frozen = [problem.driver(grid.times[k], market.state(k), y[:, k], z[:, k]) for k in range(K)]
        Y, Z, se, path_se = _backward_sweep(lambda k, yh, zk: frozen[k], xi_v, market, regs, bundle)
        gap = weighted_norm2(Y - y, grid, config.weight) + weighted_norm2(Z - z, grid, config.weight)
        scale = weighted_norm2(Y, grid, config.weight) + weighted_norm2(Z, grid, config.weight)
        if gaps and gaps[-1] > 0:
            ratios.append(gap / gaps[-1])
        gaps.append(gap)
        y, z = Y, Z
        if gap <= config.tol * scale:
            return BsdeSolution(
                DiscreteProcess(grid, Y),
                DiscreteProcess(grid, Z),
                se,
                {
                    "method": "picard",
                    "iterations": it - 1,
                    "sweeps": it,
                    "gaps": gaps,
                    "ratios": ratios,
                    "ratio_bound": 2 * (2 + T) * C**2 / config.weight,
                    "conditions": regs.conditions(),
                },
                path_se,
            )
    raise ConvergenceError(
        f"Picard iteration did not converge in {config.max_iters} sweeps (last gap {gaps[-1]:.3g})",
        ratios,
    )


def residual_check(problem: BsdeProblem, solution: BsdeSolution, model: MarketModel, bundle: PathBundle, market=None) -> dict:
    """Per-step residual ``Y_k - Y_{k+1} - f(t_k, Y_k, Z_k) dt_k + Z_k . dW_k``."""
    market = _market(model, bundle, market)
    grid = bundle.grid
    Y, Z = solution.Y.values, solution.Z.vector()
    K = grid.steps
    res = np.empty((bundle.n_paths, K))
    for k in range(K):
        f = problem.driver(grid.times[k], market.state(k), Y[:, k], Z[:, k])
        res[:, k] = Y[:, k] - Y[:, k + 1] - f * grid.dt[k] + np.einsum("pn,pn->p", Z[:, k], bundle.increments[:, k])
    per_step = np.sqrt(np.mean(res**2, axis=0))
    return {
        "rms": float(np.sqrt(np.mean(res**2))),
        "max_abs": float(np.max(np.abs(res))),
        "per_step_rms": per_step,
    }


def supersolution_from_consumption(
    problem: BsdeProblem,
    consumption: Coefficient,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
) -> BsdeSolution:
    """Solve with driver ``f + c``; ``c >= 0`` is a consumption rate."""
    market = _market(model, bundle, market)
    grid = bundle.grid
    N = bundle.n_paths
    rates = np.empty((N, grid.steps + 1))
    for k in range(grid.steps + 1):
        rates[:, k] = _coef(consumption, grid.times[k], market.state(k), (N,))
    if np.any(rates < 0):
        raise ValueError("consumption rate must be non-negative on every node and path")

    def driver(t, state, y, z):
        k = int(np.searchsorted(grid.times, t))
        return problem.driver(t, state, y, z) + rates[:, k]

    augmented = BsdeProblem(driver, problem.terminal, problem.lipschitz, None)
    sol = solve_backward_euler(augmented, model, bundle, basis, market=market)
    total = np.sum(rates[:, :-1] * grid.dt, axis=1)
    sol.diagnostics["mean_total_consumption"] = float(np.mean(total))
    return sol
