import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.paths import DiscreteProcess, constant_process
from bsdelab.utility import (
    Ball,
    Box,
    FinitePointSet,
    FullSpace,
    constraint_distance,
    driver_bound,
    fraction_to_exposure,
    log_utility_driver,
    log_utility_value,
    log_wealth_terminal,
    perturbed_fractions,
    wealth_from_fraction,
)


@pytest.fixture(scope="module")
def one_d():
    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    bundle = sample_brownian(make_time_grid(1.0, 20), 1, 20_000, seed=17)
    return model, bundle, evolve(model, bundle)


@pytest.fixture(scope="module")
def two_d():
    sigma = np.array([[0.25, 0.05], [0.1, 0.3]])
    model = MarketModel(0.03, np.array([0.08, 0.12]), sigma, s0=np.array([100.0, 50.0]))
    bundle = sample_brownian(make_time_grid(1.0, 20), 2, 20_000, seed=19)
    return model, bundle, evolve(model, bundle)


# ---------------------------------------------------------------- projections


def test_full_space_distance_is_zero_in_image():
    sigma = np.array([[0.2, 0.1], [0.0, 0.3]])
    theta = sigma.T @ np.array([0.7, -1.2])
    p = constraint_distance(theta, sigma, FullSpace(2))
    assert p.distance == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(p.fraction, [0.7, -1.2], rtol=1e-12)


def test_origin_distance_is_premium_norm():
    p = constraint_distance(np.array([0.3, 0.1]), np.eye(2), FinitePointSet(np.zeros((1, 2))))
    assert p.distance == pytest.approx(0.316228, abs=1e-6)


def test_box_example_against_grid_search():
    p = constraint_distance(np.array([1.4]), np.array([[2.0]]), Box([0.0], [0.5]))
    grid = np.linspace(0, 0.5, 100_001)
    oracle = np.min(np.abs(1.4 - 2 * grid))
    assert p.fraction[0] == pytest.approx(0.5, abs=1e-10)
    assert p.distance == pytest.approx(oracle, abs=1e-10)
    assert p.distance == pytest.approx(0.4, abs=1e-10)


def test_point_set_ties_go_to_lowest_index():
    pts = np.array([[1.0], [-1.0], [1.0]])
    p = constraint_distance(np.array([0.0]), np.array([[1.0]]), FinitePointSet(pts))
    assert p.fraction[0] == 1.0


def constraint_sets(d):
    lo = arrays(float, d, elements=st.floats(-1, 0.5))
    width = arrays(float, d, elements=st.floats(0.0, 1.0))
    box = st.builds(lambda a, w: Box(a, a + w), lo, width)
    ball = st.builds(lambda c, r: Ball(c, r), arrays(float, d, elements=st.floats(-1, 1)), st.floats(0.0, 1.5))
    points = st.builds(FinitePointSet, arrays(float, (4, d), elements=st.floats(-2, 2)))
    return st.one_of(box, ball, points)


@given(
    cs=constraint_sets(2),
    theta=arrays(float, 2, elements=st.floats(-1, 1)),
    noise=arrays(float, (2, 2), elements=st.floats(-0.3, 0.3)),
    seed=st.integers(0, 1000),
)
@settings(max_examples=60, deadline=None)
def test_projection_is_feasible_and_optimal(cs, theta, noise, seed):
    sigma = np.eye(2) + noise
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        p = constraint_distance(theta, sigma, cs)
    assert bool(cs.contains(p.fraction))
    c = cs.sample(np.random.default_rng(seed), 1000)
    assert np.all(cs.contains(c))
    others = np.linalg.norm(theta[None] - c @ sigma, axis=-1)
    assert p.distance <= others.min() + 1e-7


def test_projection_batches_match_single_calls(rng):
    sig = np.eye(2)[None] + 0.2 * rng.uniform(-1, 1, size=(30, 2, 2))
    th = rng.normal(0, 0.5, size=(30, 2))
    cs = Ball(np.array([0.2, 0.0]), 0.5)
    batch = constraint_distance(th, sig, cs)
    single = np.array([constraint_distance(th[i], sig[i], cs).distance for i in range(30)])
    np.testing.assert_allclose(batch.distance, single, atol=1e-8)


def test_constraint_construction_errors():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(ValueError):
        Ball([0.0], -1.0)
    with pytest.raises(ValueError):
        FinitePointSet(np.zeros((0, 2)))


# ---------------------------------------------------------------- driver and value


def test_full_space_driver_and_value(one_d):
    model, bundle, market = one_d
    f = log_utility_driver(model, FullSpace(1), bundle, market=market)
    np.testing.assert_allclose(f.values, 0.095, rtol=1e-12)
    rep = log_utility_value(1.0, model, FullSpace(1), bundle, market=market)
    assert rep.value == pytest.approx(0.095, rel=1e-12)


def test_origin_constraint_driver_is_rate(one_d):
    model, bundle, market = one_d
    f = log_utility_driver(model, FinitePointSet(np.zeros((1, 1))), bundle, market=market)
    np.testing.assert_allclose(f.values, 0.05, rtol=1e-12)


def test_box_driver_value():
    model = MarketModel.black_scholes(0.0, 2.8, 2.0, 1.0)  # theta = 1.4
    bundle = sample_brownian(make_time_grid(1.0, 4), 1, 50, seed=0)
    f = log_utility_driver(model, Box([0.0], [0.5]), bundle)
    np.testing.assert_allclose(f.values, 0.9, rtol=1e-10)


def test_single_point_matches_direct_formula(two_d):
    model, bundle, market = two_d
    c0 = np.array([0.4, -0.2])
    rep = log_utility_value(1.5, model, FinitePointSet(c0[None]), bundle, market=market)
    rho = market.sigma[0, 0].T @ c0
    theta = market.theta[0, 0]
    direct = np.log(1.5) + (0.03 + rho @ theta - 0.5 * rho @ rho) * 1.0
    assert rep.value == pytest.approx(direct, abs=1e-10)


@given(x=st.floats(1e-3, 1e3))
@settings(max_examples=20, deadline=None)
def test_value_shifts_by_log_of_scale(x):
    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    bundle = sample_brownian(make_time_grid(1.0, 5), 1, 200, seed=1)
    cs = Box([0.0], [1.0])
    a = log_utility_value(x, model, cs, bundle).value
    b = log_utility_value(2 * x, model, cs, bundle).value
    assert b - a == pytest.approx(np.log(2), abs=1e-12)


def test_non_positive_wealth_rejected(one_d):
    model, bundle, market = one_d
    with pytest.raises(ValueError, match="positive"):
        log_utility_value(0.0, model, FullSpace(1), bundle, market=market)


def test_driver_respects_bound(two_d):
    model, bundle, market = two_d
    cs = Ball(np.array([0.5, 0.5]), 0.3)
    f = log_utility_driver(model, cs, bundle, market=market)
    M2 = float(np.max(np.linalg.norm(market.theta, axis=-1)))
    K = float(np.max(np.linalg.norm(market.sigma, ord=2, axis=(-2, -1))))
    bound = driver_bound(model, cs, 0.03, M2, K)
    assert np.all(np.abs(f.values) <= bound)


def test_optimal_exposure_is_bounded(two_d):
    model, bundle, market = two_d
    for cs in (Box([-0.5, 0.0], [0.5, 2.0]), Ball(np.array([0.5, 0.5]), 0.3), FullSpace(2)):
        rep = log_utility_value(1.0, model, cs, bundle, market=market)
        M2 = float(np.max(np.linalg.norm(market.theta, axis=-1)))
        K = float(np.max(np.linalg.norm(market.sigma, ord=2, axis=(-2, -1))))
        c = np.linalg.norm(cs.anchor())
        assert np.all(np.linalg.norm(rep.rho.vector(), axis=-1) <= 2 * M2 + K * c + 1e-12)


# ---------------------------------------------------------------- wealth


def test_zero_fraction_wealth_is_bank(one_d):
    model, bundle, market = one_d
    X = wealth_from_fraction(2.0, constant_process(bundle.grid, bundle.n_paths, [0.0]), model, bundle, market=market)
    np.testing.assert_allclose(X.values, np.broadcast_to(2.0 * np.exp(0.05 * bundle.grid.times), X.values.shape), rtol=1e-13)


def test_wealth_is_positive_and_grid_checked(one_d):
    model, bundle, market = one_d
    rho = constant_process(bundle.grid, bundle.n_paths, [1.5])
    X = wealth_from_fraction(1.0, rho, model, bundle, market=market)
    assert np.all(X.values > 0)
    np.testing.assert_allclose(np.log(X.values[:, -1]), log_wealth_terminal(1.0, rho, model, bundle, market=market),
                               rtol=1e-10, atol=1e-12)
    other = constant_process(make_time_grid(1.0, 5), bundle.n_paths, [1.0])
    with pytest.raises(ValueError, match="grid"):
        wealth_from_fraction(1.0, other, model, bundle, market=market)


@pytest.mark.parametrize("cs", [Box([-0.5, 0.0], [0.5, 2.0]), FullSpace(2), Ball(np.array([0.5, 0.5]), 0.3)])
def test_optimal_wealth_attains_value(two_d, cs):
    model, bundle, market = two_d
    rep = log_utility_value(1.0, model, cs, bundle, market=market)
    logx = log_wealth_terminal(1.0, rep.rho, model, bundle, market=market)
    se = logx.std() / np.sqrt(logx.size)
    assert abs(logx.mean() - rep.value) < 3 * se


def test_perturbations_do_not_beat_optimum(two_d):
    model, bundle, market = two_d
    cs = Box([-0.5, 0.0], [0.5, 2.0])
    rep = log_utility_value(1.0, model, cs, bundle, market=market)
    best = log_wealth_terminal(1.0, rep.rho, model, bundle, market=market)
    rng = np.random.default_rng(5)
    for _ in range(20):
        c = perturbed_fractions(rep, cs, rng)
        assert np.all(cs.contains(c.reshape(-1, 2)))
        rho = DiscreteProcess(bundle.grid, fraction_to_exposure(c, market))
        alt = log_wealth_terminal(1.0, rho, model, bundle, market=market)
        gain = alt - best
        assert gain.mean() <= 3 * gain.std() / np.sqrt(gain.size)
