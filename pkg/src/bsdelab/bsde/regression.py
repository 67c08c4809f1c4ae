"""Regression estimates of conditional expectations on a time node."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Callable, Optional

import numpy as np


class ConditioningError(ArithmeticError):
    """The regression design is too ill-conditioned even after ridge."""

    def __init__(self, condition: float):
        super().__init__(f"regression design is rank deficient (condition number {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class RegressionBasis:
    """Feature map plus ridge penalty.

    The default features are all monomials of the standardized log prices
    up to total degree ``degree`` (intercept included).  A custom
    ``features`` callable maps ``(t, state)`` to an ``(N, p)`` design
    matrix and should include its own intercept column.  ``ridge=None``
    means ``1e-8 * n_paths``.
    """

    degree: int = 4
    ridge: Optional[float] = None
    features: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    max_condition: float = 1e13

    def __post_init__(self):
        if self.features is None and self.degree < 0:
            raise ValueError("polynomial degree must be non-negative")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge parameter must be non-negative")

    def penalty(self, n_paths: int) -> float:
        return 1e-8 * n_paths if self.ridge is None else self.ridge

    def design(self, t: float, state: np.ndarray) -> np.ndarray:
        if self.features is not None:
            X = np.asarray(self.features(t, state), dtype=float)
            if X.ndim == 1:
                X = X[:, None]
        else:
            X = log_monomials(state, self.degree)
        if X.shape[1] < 1:
            raise ValueError("feature map produced no features")
        if not np.all(np.isfinite(X)):
            raise ValueError(f"non-finite regression features at t={t:g}")
        return X


def log_monomials(state: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of standardized ``log(state)`` up to total ``degree``.

    Coordinates with (numerically) zero spread, such as the deterministic
    initial state, contribute no columns.
    """
    x = np.log(state)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    keep = std > 1e-12 * (1.0 + np.abs(mean))
    x = (x[:, keep] - mean[keep]) / std[keep]
    cols = [np.ones(x.shape[0])]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(x.shape[1]), deg):
            cols.append(np.prod(x[:, combo], axis=1))
    return np.column_stack(cols)


class Projector:
    """Ridge least-squares projection onto the column span of a fixed design."""

    def __init__(self, X: np.ndarray, ridge: float, max_condition: float = 1e13):
        N, p = X.shape
        if N < p:
            raise ValueError(f"need at least {p} paths for {p} features, got {N}")
        # constant columns (the intercept) are left unpenalized so constants are reproduced
        constant = np.all(X == X[:1], axis=0)
        gram = X.T @ X + np.diag(np.where(constant, 0.0, ridge))
        self.condition = float(np.linalg.cond(gram))
        if not np.isfinite(self.condition) or self.condition > max_condition:
            raise ConditioningError(self.condition)
        self.X = X
        self._chol = np.linalg.cholesky(gram)
        self._leverage = None

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def leverage(self) -> np.ndarray:
        """Diagonal of the hat matrix: how strongly each path's fit depends on its own target."""
        if self._leverage is None:
            half = np.linalg.solve(self._chol, self.X.T)
            self._leverage = np.sum(half**2, axis=0)
        return self._leverage

    def coefficients(self, targets: np.ndarray) -> np.ndarray:
        rhs = self.X.T @ targets
        w = np.linalg.solve(self._chol, rhs)
        return np.linalg.solve(self._chol.T, w)

    def fit(self, targets: np.ndarray) -> np.ndarray:
        return self.X @ self.coefficients(targets)


def condexp_regress(targets: np.ndarray, features: np.ndarray, basis: RegressionBasis) -> np.ndarray:
    """Fitted values of a ridge least-squares regression of ``targets`` on ``features``.

    ``targets`` may be ``(N,)`` or ``(N, m)`` (several right-hand sides).
    """
    targets = np.asarray(targets, dtype=float)
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    proj = Projector(features, basis.penalty(features.shape[0]), basis.max_condition)
    return proj.fit(targets)
