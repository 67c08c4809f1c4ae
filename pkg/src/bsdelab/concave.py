"""Conjugate duality for concave drivers.

A concave driver ``f`` is the lower envelope of the linear drivers
``F(beta, gamma) + beta y + gamma . z`` where ``F`` is its polar.  On a
finite grid of controls the envelope of the linear BSDE solutions bounds
the nonlinear solution from above and matches it when the grid contains
the optimal control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bsde.regression import RegressionBasis
from .bsde.solvers import BsdeSolution, LinearDriverSpec, Terminal, _NodeRegressions, solve_linear
from .market import Coefficient, MarketModel, MarketPaths, evolve
from .paths import PathBundle

INFINITY_THRESHOLD = 1e12


@dataclass(frozen=True, eq=False)
class YZGrid:
    """Tensor grid over ``(y, z_1, ..., z_n)``; ``z_axes`` may be empty."""

    y: np.ndarray
    z_axes: Sequence[np.ndarray] = ()

    @classmethod
    def box(cls, half_width: float, n: int, points: int = 41, center=None) -> "YZGrid":
        center = np.zeros(n + 1) if center is None else np.asarray(center, dtype=float)
        axes = [c + np.linspace(-half_width, half_width, points) for c in center]
        return cls(axes[0], tuple(axes[1:]))

    @property
    def n(self) -> int:
        return len(self.z_axes)

    @property
    def axes(self):
        return (np.asarray(self.y, dtype=float),) + tuple(np.asarray(a, dtype=float) for a in self.z_axes)

    def mesh(self):
        """Flattened points ``y`` of shape ``(m,)`` and ``z`` of shape ``(m, n)``."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        y = grids[0].ravel()
        z = np.stack([g.ravel() for g in grids[1:]], axis=1) if self.n else np.zeros((y.size, 0))
        return y, z


def pilot_yz_grid(pilot: BsdeSolution, points: int = 41, width: float = 5.0) -> YZGrid:
    """Box of ``width`` standard deviations around the mean of ``Y`` and each ``Z`` coordinate.

    Moments are pooled over all paths and nodes of a pilot solve; a
    degenerate coordinate gets unit spread so the box never collapses.
    """
    Y = pilot.Y.values
    Z = pilot.Z.vector()[:, :-1]
    samples = [Y.ravel()] + [Z[..., j].ravel() for j in range(Z.shape[-1])]
    axes = []
    for v in samples:
        mean, sd = float(np.mean(v)), float(np.std(v))
        sd = sd if sd > 1e-9 * max(1.0, abs(mean)) else 1.0
        axes.append(mean + np.linspace(-width * sd, width * sd, points))
    return YZGrid(axes[0], tuple(axes[1:]))


def _as_control(beta, gamma, n):
    return float(beta), np.broadcast_to(np.asarray(gamma, dtype=float), (n,))


def polar(f: Callable[[np.ndarray, np.ndarray], np.ndarray], beta: float, gamma, yz_grid: YZGrid) -> float:
    """``sup_{(y,z)} f(y, z) - beta y - gamma . z`` over ``yz_grid``.

    ``f`` is the driver frozen at one ``(t, state)``, vectorized over grid
    points.  Returns ``inf`` when the maximum exceeds the threshold, or sits
    on the grid boundary with the objective still increasing outward.
    """
    n = yz_grid.n
    beta, gamma = _as_control(beta, gamma, n)

    def objective(grid):
        y, z = grid.mesh()
        return np.asarray(f(y, z), dtype=float) - beta * y - z @ gamma

    vals = objective(yz_grid)
    best = float(np.max(vals))
    if best > INFINITY_THRESHOLD:
        return np.inf
    tol = 1e-9 * max(1.0, abs(best))
    shape = tuple(a.size for a in yz_grid.axes)
    cube = vals.reshape(shape)
    on_boundary = False
    for axis, size in enumerate(shape):
        for edge in {0, size - 1}:
            if np.max(np.take(cube, edge, axis=axis)) >= best - tol:
                on_boundary = True
    if on_boundary:
        # a flat ridge reaching the boundary is fine; growth beyond it is not
        wider = YZGrid(*_widen(yz_grid.axes))
        if float(np.max(objective(wider))) > best + tol:
            return np.inf
    return best


def _widen(axes, factor: float = 2.0):
    out = []
    for a in axes:
        c = 0.5 * (a[0] + a[-1])
        out.append(c + factor * (a - c))
    return out[0], tuple(out[1:])


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Finite set of constant controls ``(beta, gamma)`` inside ``[-C, C]^{n+1}``.

    ``offsets`` holds the polar value ``F`` for each control (constant or a
    coefficient callable of ``(t, state)``); it defaults to zero.
    """

    betas: np.ndarray
    gammas: np.ndarray  # (m, n)
    bound: float
    offsets: Optional[Sequence[Coefficient]] = None
    resolution: dict = field(default_factory=dict)

    def __post_init__(self):
        betas = np.atleast_1d(np.asarray(self.betas, dtype=float))
        gammas = np.asarray(self.gammas, dtype=float)
        if gammas.ndim == 1:
            gammas = gammas[:, None] if gammas.size == betas.size else gammas[None, :]
        gammas = np.broadcast_to(gammas, (betas.size, gammas.shape[1])).copy()
        if betas.size == 0:
            raise ValueError("control grid is empty")
        if np.any(np.abs(betas) > self.bound) or np.any(np.abs(gammas) > self.bound):
            raise ValueError(f"controls leave the box [-{self.bound}, {self.bound}]")
        offsets = [0.0] * betas.size if self.offsets is None else list(self.offsets)
        if len(offsets) != betas.size:
            raise ValueError("need one polar value per control")
        for F in offsets:
            if not callable(F) and not np.all(np.isfinite(F)):
                raise ValueError("every grid control needs a finite polar value")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "offsets", offsets)

    def __len__(self) -> int:
        return self.betas.size

    @classmethod
    def box(cls, bound: float, n: int, points: int) -> "ControlGrid":
        axis = np.linspace(-bound, bound, points)
        mesh = np.meshgrid(*([axis] * (n + 1)), indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(flat[:, 0], flat[:, 1:], bound, resolution={"points_per_axis": points})

    def driver_spec(self, i: int) -> LinearDriverSpec:
        return linear_family_driver(self.offsets[i], self.betas[i], self.gammas[i])

    def union(self, other: "ControlGrid") -> "ControlGrid":
        return ControlGrid(
            np.concatenate([self.betas, other.betas]),
            np.concatenate([self.gammas, other.gammas]),
            max(self.bound, other.bound),
            list(self.offsets) + list(other.offsets),
        )

    def negated_offsets(self) -> "ControlGrid":
        neg = [(lambda t, s, F=F: -np.asarray(F(t, s))) if callable(F) else -np.asarray(F) for F in self.offsets]
        return ControlGrid(self.betas, self.gammas, self.bound, neg, dict(self.resolution))


@dataclass(frozen=True, eq=False)
class PolarTable:
    """Polar values on a control grid for one ``(t, state)`` context."""

    betas: np.ndarray
    gammas: np.ndarray
    values: np.ndarray  # inf where the sup diverges

    @classmethod
    def build(cls, f, controls: ControlGrid, yz_grid: YZGrid) -> "PolarTable":
        vals = np.array([polar(f, b, g, yz_grid) for b, g in zip(controls.betas, controls.gammas)])
        return cls(controls.betas, controls.gammas, vals)

    def finite(self) -> "PolarTable":
        ok = np.isfinite(self.values)
        return PolarTable(self.betas[ok], self.gammas[ok], self.values[ok])


def linear_family_driver(F: Coefficient, beta, gamma) -> LinearDriverSpec:
    """``f^{beta,gamma} = F + beta y + gamma . z``."""
    if not callable(F) and not np.all(np.isfinite(F)):
        raise ValueError("polar value is infinite: control is not admissible")
    return LinearDriverSpec(phi=F, beta=float(beta), gamma=np.asarray(gamma, dtype=float))


def conjugate_reconstruct(table: PolarTable, y, z) -> np.ndarray:
    """``min over finite grid controls of F + beta y + gamma . z``."""
    fin = table.finite()
    if fin.values.size == 0:
        raise ValueError("polar table has no finite entry")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    z = z.reshape(y.size, -1) if z.size else np.zeros((y.size, 0))
    cand = fin.values[None, :] + y[:, None] * fin.betas[None, :] + z @ fin.gammas.T
    out = np.min(cand, axis=1)
    return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class Envelope:
    Y: np.ndarray  # (N, K+1)
    argbest: np.ndarray  # (N, K+1) control index
    y0_per_control: np.ndarray
    y0_stderr_per_control: np.ndarray

    @property
    def y0(self) -> float:
        return float(self.Y[0, 0])


def _envelope(xi, controls, model, bundle, basis, market, pick):
    if len(controls) == 0:
        raise ValueError("control grid is empty")
    market = evolve(model, bundle) if market is None else market
    regs = _NodeRegressions(market, basis)
    sols = [solve_linear(controls.driver_spec(i), xi, model, bundle, basis, market=market, regressions=regs)
            for i in range(len(controls))]
    stack = np.stack([s.Y.values for s in sols])
    # ties go to the lowest control index
    idx = pick(stack, axis=0)
    Y = np.take_along_axis(stack, idx[None], axis=0)[0]
    return Envelope(Y, idx, np.array([s.y0 for s in sols]), np.array([s.y0_stderr for s in sols]))


def essinf_envelope(
    xi: Terminal,
    controls: ControlGrid,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
) -> Envelope:
    """Path-wise, node-wise minimum of the linear solutions over ``controls``."""
    return _envelope(xi, controls, model, bundle, basis, market, np.argmin)


def esssup_envelope(
    xi: Terminal,
    controls: ControlGrid,
    model: MarketModel,
    bundle: PathBundle,
    basis: RegressionBasis,
    market: Optional[MarketPaths] = None,
) -> Envelope:
    """Maximum counterpart of :func:`essinf_envelope`, for convex drivers."""
    return _envelope(xi, controls, model, bundle, basis, market, np.argmax)
