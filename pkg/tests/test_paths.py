import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsdelab.paths import (
    BLOCK_SIZE,
    DiscreteProcess,
    TimeGrid,
    constant_process,
    ito_integrate,
    make_time_grid,
    sample_brownian,
    stochastic_exponential,
)


@pytest.mark.parametrize(
    "T,K,expected",
    [(1.0, 4, [0, 0.25, 0.5, 0.75, 1.0]), (2.0, 1, [0, 2.0])],
)
def test_uniform_grid_nodes(T, K, expected):
    grid = make_time_grid(T, K)
    np.testing.assert_allclose(grid.times, expected, rtol=0, atol=1e-15)
    assert grid.steps == K


def test_grid_fifty_steps():
    grid = make_time_grid(0.5, 50)
    assert grid.times.size == 51
    np.testing.assert_allclose(grid.dt, 0.01, rtol=1e-12)
    assert grid.times[-1] == 0.5


@pytest.mark.parametrize("T,K", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, -3), (1.0, 2.5)])
def test_grid_rejects_bad_arguments(T, K):
    with pytest.raises(ValueError):
        make_time_grid(T, K)


def test_grid_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        TimeGrid(1.0, np.array([0.0, 0.6, 0.4, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(1.0, np.array([0.1, 1.0]))


@given(T=st.floats(1e-3, 50.0), K=st.integers(1, 400))
@settings(max_examples=50, deadline=None)
def test_grid_invariants(T, K):
    grid = make_time_grid(T, K)
    assert grid.times[0] == 0.0 and grid.times[-1] == T
    assert np.all(grid.dt > 0)
    np.testing.assert_allclose(grid.dt.sum(), T, rtol=1e-12)


def test_same_seed_same_bundle():
    grid = make_time_grid(1.0, 10)
    a = sample_brownian(grid, 2, 3000, seed=5)
    b = sample_brownian(grid, 2, 3000, seed=5)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_brownian(grid, 2, 3000, seed=6).increments)


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_bundle_independent_of_worker_count(workers):
    grid = make_time_grid(1.0, 7)
    n = 3 * BLOCK_SIZE + 17
    serial = sample_brownian(grid, 2, n, seed=99)
    parallel = sample_brownian(grid, 2, n, seed=99, workers=workers)
    assert np.array_equal(serial.increments, parallel.increments)


@given(m=st.integers(1, 2500), extra=st.integers(0, 2500))
@settings(max_examples=25, deadline=None)
def test_bundle_prefix_property(m, extra):
    grid = make_time_grid(1.0, 3)
    short = sample_brownian(grid, 1, m, seed=3)
    long = sample_brownian(grid, 1, m + extra, seed=3)
    assert np.array_equal(short.increments, long.increments[:m])


def test_bundle_is_read_only():
    b = sample_brownian(make_time_grid(1.0, 2), 1, 10, seed=0)
    with pytest.raises(ValueError):
        b.increments[0, 0, 0] = 1.0


def test_terminal_moments(bs_bundle):
    wT = bs_bundle.brownian[:, -1, 0]
    T, N = bs_bundle.grid.horizon, bs_bundle.n_paths
    assert abs(wT.mean()) < 4 * np.sqrt(T / N)
    assert abs(wT.var() / T - 1) < 0.05


def test_increment_variance_matches_step():
    grid = TimeGrid(1.0, np.array([0.0, 0.1, 0.5, 1.0]))
    b = sample_brownian(grid, 1, 100_000, seed=8)
    np.testing.assert_allclose(b.increments[:, :, 0].var(axis=0), grid.dt, rtol=0.03)


def test_ito_zero_and_unit_integrands(small_bundle):
    grid = small_bundle.grid
    N = small_bundle.n_paths
    zero = ito_integrate(constant_process(grid, N, [0.0]), small_bundle)
    assert np.all(zero.values == 0)
    one = ito_integrate(constant_process(grid, N, [1.0]), small_bundle)
    np.testing.assert_allclose(one.values, small_bundle.brownian[:, :, 0], atol=1e-13)


def test_ito_deterministic_step_function_is_exact_sum():
    grid = make_time_grid(1.0, 6)
    b = sample_brownian(grid, 1, 50, seed=1)
    h = np.repeat(np.array([2.0, 2.0, -1.0, -1.0, 0.5, 0.5, 9.0])[None, :], 50, axis=0)
    out = ito_integrate(DiscreteProcess(grid, h), b).values
    dW = b.increments[:, :, 0]
    manual = np.concatenate([np.zeros((50, 1)), np.cumsum(h[:, :-1] * dW, axis=1)], axis=1)
    assert np.array_equal(out, manual)


def test_ito_integral_is_centered(small_bundle):
    # bounded adapted integrand: sign of W at the left endpoint
    W = small_bundle.brownian[:, :, 0]
    out = ito_integrate(DiscreteProcess(small_bundle.grid, np.sign(W)), small_bundle).values[:, -1]
    assert abs(out.mean()) < 4 * out.std() / np.sqrt(out.size)


def test_ito_rejects_grid_mismatch(small_bundle):
    other = make_time_grid(1.0, 5)
    with pytest.raises(ValueError):
        ito_integrate(constant_process(other, small_bundle.n_paths, [1.0]), small_bundle)


def test_stochastic_exponential_trivial_cases(small_bundle):
    grid, N = small_bundle.grid, small_bundle.n_paths
    flat = stochastic_exponential(constant_process(grid, N, 0.0), constant_process(grid, N, [0.0]), small_bundle)
    assert np.all(flat.values == 1.0)
    growth = stochastic_exponential(constant_process(grid, N, 0.07), constant_process(grid, N, [0.0]), small_bundle)
    np.testing.assert_allclose(growth.values, np.exp(0.07 * grid.times)[None, :].repeat(N, 0), rtol=1e-13)


def test_exponential_martingale_mean(bs_bundle):
    grid, N = bs_bundle.grid, bs_bundle.n_paths
    E = stochastic_exponential(constant_process(grid, N, 0.0), constant_process(grid, N, [0.4]), bs_bundle)
    x = E.values[:, -1]
    assert abs(x.mean() - 1) < 4 * x.std() / np.sqrt(N)
    assert np.all(E.values > 0)
    assert np.all(E.values[:, 0] == 1)


def test_adaptedness_of_integral_and_exponential():
    grid = make_time_grid(1.0, 8)
    b = sample_brownian(grid, 1, 200, seed=2)
    inc = np.array(b.increments)
    k = 5
    inc[:, k, :] += 3.0
    bumped = type(b)(grid, 1, 200, inc, 2)
    h = constant_process(grid, 200, [0.7])
    a0, a1 = ito_integrate(h, b).values, ito_integrate(h, bumped).values
    assert np.array_equal(a0[:, : k + 1], a1[:, : k + 1])
    assert not np.array_equal(a0[:, k + 1], a1[:, k + 1])
    e0 = stochastic_exponential(constant_process(grid, 200, 0.1), h, b).values
    e1 = stochastic_exponential(constant_process(grid, 200, 0.1), h, bumped).values
    assert np.array_equal(e0[:, : k + 1], e1[:, : k + 1])


def test_discrete_process_shape_checked():
    grid = make_time_grid(1.0, 4)
    with pytest.raises(ValueError):
        DiscreteProcess(grid, np.zeros((3, 4)))
    p = DiscreteProcess(grid, np.zeros((3, 5, 2)))
    assert p.dim == 2 and p.n_paths == 3
