"""Time grids, seeded Brownian ensembles and discrete stochastic calculus.

Every Monte Carlo computation in the package runs on a :class:`PathBundle`.
Increments are generated in fixed-size blocks of paths, each block drawn
from its own Philox counter stream keyed by ``(seed, block index)``.  The
result therefore does not depend on how many workers generate it, and the
first ``m`` paths of a bundle do not depend on the total path count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 1024


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.flags.writeable:
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ascending time nodes ``0 = t_0 < ... < t_K = T``."""

    horizon: float
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if times[0] != 0.0 or times[-1] != self.horizon:
            raise ValueError("time grid must start at 0 and end at the horizon")
        if np.any(np.diff(times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", _readonly(times))

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def matches(self, other: "TimeGrid") -> bool:
        return self is other or np.array_equal(self.times, other.times)


def make_time_grid(T: float, K: int) -> TimeGrid:
    """Uniform grid on ``[0, T]`` with ``K`` steps."""
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if int(K) != K or K < 1:
        raise ValueError(f"step count must be a positive integer, got {K}")
    times = np.linspace(0.0, T, int(K) + 1)
    times[-1] = T
    return TimeGrid(float(T), times)


@dataclass(frozen=True, eq=False)
class PathBundle:
    grid: TimeGrid
    dim: int
    n_paths: int
    increments: np.ndarray  # (n_paths, K, dim)
    seed: int

    @property
    def brownian(self) -> np.ndarray:
        """Brownian paths on all nodes, shape ``(n_paths, K+1, dim)``."""
        w = np.zeros((self.n_paths, self.grid.steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=w[:, 1:, :])
        return w


def _block_normals(seed: int, block: int, size: int, steps: int, dim: int) -> np.ndarray:
    counter = np.array([0, 0, block, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    return gen.standard_normal((size, steps, dim))


def sample_brownian(
    grid: TimeGrid, n: int, n_paths: int, seed: int, workers: int = 1
) -> PathBundle:
    """Draw ``n_paths`` independent ``n``-dimensional Brownian paths on ``grid``.

    ``workers`` only changes wall time; the increments are bit-identical for
    any value.
    """
    if n < 1 or n_paths < 1:
        raise ValueError("dimension and path count must be at least 1")
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    seed = int(seed)
    steps = grid.steps
    starts = range(0, n_paths, BLOCK_SIZE)

    def draw(start):
        size = min(BLOCK_SIZE, n_paths - start)
        return _block_normals(seed, start // BLOCK_SIZE, size, steps, n)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(draw, starts))
    else:
        blocks = [draw(s) for s in starts]
    z = np.concatenate(blocks, axis=0)
    z *= np.sqrt(grid.dt)[None, :, None]
    return PathBundle(grid, int(n), int(n_paths), _readonly(z), seed)


@dataclass(frozen=True, eq=False)
class DiscreteProcess:
    """Per-path values on every grid node.

    ``values`` has shape ``(n_paths, K+1)`` for scalar processes and
    ``(n_paths, K+1, m)`` for vector ones.  The value at node ``k`` may only
    depend on increments of steps ``0..k-1``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (2, 3) or v.shape[1] != self.grid.steps + 1:
            raise ValueError(
                f"values of shape {v.shape} do not fit a grid with {self.grid.steps + 1} nodes"
            )
        if v.flags.writeable:
            v = v.view()
            v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[2]

    def vector(self) -> np.ndarray:
        """Values as a 3-d array ``(n_paths, K+1, m)``."""
        return self.values if self.values.ndim == 3 else self.values[:, :, None]

    def at(self, k: int) -> np.ndarray:
        return self.values[:, k]


def constant_process(grid: TimeGrid, n_paths: int, value) -> DiscreteProcess:
    """A process equal to ``value`` (scalar or vector) everywhere, without copying."""
    value = np.asarray(value, dtype=float)
    shape = (n_paths, grid.steps + 1) + value.shape
    return DiscreteProcess(grid, np.broadcast_to(value, shape))


def _check_grid(process: DiscreteProcess, bundle: PathBundle, name: str):
    if not process.grid.matches(bundle.grid):
        raise ValueError(f"{name} lives on a different time grid than the path bundle")
    if process.n_paths != bundle.n_paths:
        raise ValueError(
            f"{name} has {process.n_paths} paths, bundle has {bundle.n_paths}"
        )


def _vector_against(process: DiscreteProcess, bundle: PathBundle, name: str) -> np.ndarray:
    v = process.vector()
    if v.shape[2] != bundle.dim:
        raise ValueError(f"{name} has dimension {v.shape[2]}, Brownian motion has {bundle.dim}")
    return v


def ito_integrate(integrand: DiscreteProcess, bundle: PathBundle) -> DiscreteProcess:
    """Left-endpoint stochastic integral ``sum_{j<k} integrand_j . dW_j``."""
    _check_grid(integrand, bundle, "integrand")
    h = _vector_against(integrand, bundle, "integrand")
    out = np.zeros((bundle.n_paths, bundle.grid.steps + 1))
    np.cumsum(np.einsum("pkn,pkn->pk", h[:, :-1, :], bundle.increments), axis=1, out=out[:, 1:])
    return DiscreteProcess(bundle.grid, out)


def log_stochastic_exponential(
    drift: DiscreteProcess, vol: DiscreteProcess, bundle: PathBundle
) -> np.ndarray:
    """Logarithm of :func:`stochastic_exponential`, shape ``(n_paths, K+1)``."""
    _check_grid(drift, bundle, "drift")
    _check_grid(vol, bundle, "vol")
    if drift.dim != 1:
        raise ValueError("drift must be a scalar process")
    g = _vector_against(vol, bundle, "vol")[:, :-1, :]
    a = drift.values[:, :-1]
    dt = bundle.grid.dt
    step = (a - 0.5 * np.einsum("pkn,pkn->pk", g, g)) * dt
    step = step + np.einsum("pkn,pkn->pk", g, bundle.increments)
    out = np.zeros((bundle.n_paths, bundle.grid.steps + 1))
    np.cumsum(step, axis=1, out=out[:, 1:])
    return out


def stochastic_exponential(
    drift: DiscreteProcess, vol: DiscreteProcess, bundle: PathBundle
) -> DiscreteProcess:
    """Discrete ``E(int drift dt + int vol . dW)``, equal to 1 at node 0."""
    return DiscreteProcess(bundle.grid, np.exp(log_stochastic_exponential(drift, vol, bundle)))
