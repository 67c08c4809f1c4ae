"""Weighted-norm stability bounds between two BSDE solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..market import MarketModel, evolve
from ..paths import PathBundle
from .solvers import BsdeProblem, BsdeSolution, weighted_norm2


@dataclass(frozen=True)
class AprioriReport:
    dy_norm2: float
    dz_norm2: float
    terminal_term: float  # e^{beta T} E|dY_T|^2
    df_norm2: float  # ||f1(Y2, Z2) - f2(Y2, Z2)||_beta^2
    bound_y: float
    bound_z: float

    @property
    def slack_y(self) -> float:
        return self.bound_y - self.dy_norm2

    @property
    def slack_z(self) -> float:
        return self.bound_z - self.dz_norm2

    @property
    def satisfied(self) -> bool:
        return self.slack_y >= 0 and self.slack_z >= 0


def apriori_gap(
    sol1: BsdeSolution,
    sol2: BsdeSolution,
    problem1: BsdeProblem,
    problem2: BsdeProblem,
    beta: float,
    model: MarketModel,
    bundle: PathBundle,
    market=None,
) -> AprioriReport:
    """Evaluate both sides of the a priori estimates on the grid.

    ``||dY||^2 <= T (e^{bT} E|dY_T|^2 + ||d2f||^2 / (b - 2C - C^2))`` and the
    same with ``2 + 2 C^2 T`` in front for ``dZ``; ``C`` is the Lipschitz
    constant of ``problem1``.
    """
    C = problem1.lipschitz
    if not beta > C * (2 + C):
        raise ValueError(f"beta {beta} must exceed C(2+C) = {C * (2 + C):.4g}")
    market = evolve(model, bundle) if market is None else market
    grid = bundle.grid
    T, K = grid.horizon, grid.steps
    dY = sol1.Y.values - sol2.Y.values
    dZ = sol1.Z.vector() - sol2.Z.vector()
    Y2, Z2 = sol2.Y.values, sol2.Z.vector()
    d2f = np.zeros((bundle.n_paths, K + 1))
    for k in range(K):
        t, s = grid.times[k], market.state(k)
        d2f[:, k] = problem1.driver(t, s, Y2[:, k], Z2[:, k]) - problem2.driver(t, s, Y2[:, k], Z2[:, k])
    dy2 = weighted_norm2(dY, grid, beta)
    dz2 = weighted_norm2(dZ, grid, beta)
    df2 = weighted_norm2(d2f, grid, beta)
    term = float(np.exp(beta * T) * np.mean(dY[:, K] ** 2))
    core = term + df2 / (beta - 2 * C - C**2)
    return AprioriReport(dy2, dz2, term, df2, T * core, (2 + 2 * C**2 * T) * core)
