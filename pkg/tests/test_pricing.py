import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bond as bond_oracle
from oracles import bs_call, bs_digital, bs_put

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.bsde import RegressionBasis
from bsdelab.pricing import (
    ClaimDataError,
    ClaimSpec,
    bond,
    borrowing_price,
    borrowing_price_dual,
    call,
    digital,
    dual_betas,
    emm_price,
    fair_price,
    hedge_replay,
    put,
    stock,
    with_rate,
)


@pytest.fixture(scope="module")
def borrow_setup():
    model = MarketModel.black_scholes(0.04, 0.09, 0.2, 100.0)
    bundle = sample_brownian(make_time_grid(0.5, 25), 1, 50_000, seed=21)
    return model, bundle, evolve(model, bundle)


# ---------------------------------------------------------------- complete market


def test_bond_price(bs_model, bs_bundle, bs_market, basis):
    rep = fair_price(bond(), bs_model, bs_bundle, basis, market=bs_market, hedge=False)
    assert abs(rep.price - bond_oracle(0.05, 1.0)) < 3 * rep.stderr


def test_call_price_and_hedge(bs_model, bs_bundle, bs_market, basis):
    rep = fair_price(call(100.0), bs_model, bs_bundle, basis, market=bs_market)
    target = bs_call(100, 100, 0.05, 0.2, 1.0)
    assert abs(rep.price / target - 1) < 0.01
    assert abs(rep.details["bsde_y0"] / target - 1) < 0.01
    # money in the stock at time 0 is S0 times the Black-Scholes delta
    delta = rep.hedge.values[0, 0, 0] / 100.0
    assert delta == pytest.approx(0.6368, abs=0.02)


@pytest.mark.parametrize(
    "claim,oracle",
    [(put(105.0), bs_put(100, 105, 0.05, 0.2, 1.0)), (digital(95.0), bs_digital(100, 95, 0.05, 0.2, 1.0))],
)
def test_other_claims(claim, oracle, bs_model, bs_bundle, bs_market, basis):
    rep = fair_price(claim, bs_model, bs_bundle, basis, market=bs_market, hedge=False)
    assert abs(rep.price - oracle) < 4 * rep.stderr


def test_stock_prices_at_spot(bs_model, bs_bundle, bs_market, basis):
    rep = fair_price(stock(), bs_model, bs_bundle, basis, market=bs_market, hedge=False)
    assert abs(rep.price - 100.0) < 3 * rep.stderr


def test_emm_equals_deflator_pathwise(bs_model, bs_bundle, bs_market, basis):
    for claim in (call(100.0), bond(), digital(110.0)):
        a = fair_price(claim, bs_model, bs_bundle, basis, market=bs_market, hedge=False)
        b = emm_price(claim, bs_model, bs_bundle, market=bs_market)
        assert b.price == pytest.approx(a.price, rel=1e-12)


def test_emm_without_premium_is_discounted_mean():
    model = MarketModel.black_scholes(0.05, 0.05, 0.2, 100.0)
    bundle = sample_brownian(make_time_grid(1.0, 10), 1, 5000, seed=1)
    market = evolve(model, bundle)
    rep = emm_price(call(100.0), model, bundle, market=market)
    direct = np.mean(np.exp(-0.05) * np.maximum(market.risky[:, -1, 0] - 100, 0))
    assert rep.price == pytest.approx(direct, rel=1e-13)


def test_hedge_unavailable_in_incomplete_market():
    model = MarketModel(0.05, np.array([0.1]), np.array([[0.2, 0.1]]), s0=100.0)
    bundle = sample_brownian(make_time_grid(1.0, 10), 2, 2000, seed=3)
    rep = fair_price(call(100.0), model, bundle, RegressionBasis())
    assert rep.hedge is None and "d < n" in rep.details["hedge"]
    with pytest.raises(ValueError, match="no hedge"):
        hedge_replay(rep, model, bundle)


def test_hedge_replay_error_shrinks_with_steps():
    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    basis = RegressionBasis()
    rmse = []
    for steps in (10, 80):
        bundle = sample_brownian(make_time_grid(1.0, steps), 1, 20_000, seed=3)
        market = evolve(model, bundle)
        rep = fair_price(call(100.0), model, bundle, basis, market=market)
        x = hedge_replay(rep, model, bundle, market=market)
        rmse.append(np.sqrt(np.mean((x - call(100.0).values(market)) ** 2)))
    assert rmse[1] < rmse[0]


def test_bad_claims_are_rejected(small_market):
    with pytest.raises(ClaimDataError, match="non-negative"):
        ClaimSpec(lambda s: s[:, 0] - 200.0).values(small_market)
    with pytest.raises(ClaimDataError, match="finite"):
        ClaimSpec(lambda s: np.where(s[:, 0] > 100, np.inf, 0.0)).values(small_market)


@given(k1=st.floats(70, 130), gap=st.floats(0, 30))
@settings(max_examples=15, deadline=None)
def test_claim_monotonicity(k1, gap):
    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    bundle = sample_brownian(make_time_grid(1.0, 5), 1, 4000, seed=5)
    market = evolve(model, bundle)
    lo = fair_price(call(k1 + gap), model, bundle, RegressionBasis(), market=market, hedge=False)
    hi = fair_price(call(k1), model, bundle, RegressionBasis(), market=market, hedge=False)
    assert hi.price >= lo.price - 3 * max(hi.stderr, lo.stderr)
    assert lo.price >= -3 * lo.stderr


# ---------------------------------------------------------------- borrowing market


def test_borrowing_reduces_to_fair_price(bs_model, small_bundle, small_market, basis):
    fair = fair_price(call(100.0), bs_model, small_bundle, basis, market=small_market, hedge=False)
    rep = borrowing_price(call(100.0), bs_model, 0.05, small_bundle, basis, market=small_market)
    assert abs(rep.price / fair.price - 1) < 0.005


def test_borrowing_rate_below_lending_rejected(bs_model, small_bundle, basis):
    with pytest.raises(ValueError, match="at least"):
        borrowing_price(call(100.0), bs_model, 0.01, small_bundle, basis)


def test_borrowing_bracket_and_dual(borrow_setup, basis):
    model, bundle, market = borrow_setup
    claim = call(100.0)
    nonlinear = borrowing_price(claim, model, 0.06, bundle, basis, market=market)
    low = fair_price(claim, model, bundle, basis, market=market, hedge=False)
    high_model = with_rate(model, 0.06)
    high = fair_price(claim, high_model, bundle, basis, market=evolve(high_model, bundle), hedge=False)
    se = max(nonlinear.stderr, low.stderr, high.stderr)
    assert low.price - 3 * se <= nonlinear.price <= high.price + 3 * se

    dual = borrowing_price_dual(claim, model, 0.06, dual_betas(0.06, 0.04), bundle, market=market)
    assert abs(dual.price / nonlinear.price - 1) < 0.01
    assert np.all(dual.details["prices"] <= nonlinear.price + 3 * dual.details["stderrs"].max())
    coarse = borrowing_price_dual(claim, model, 0.06, dual_betas(0.06, 0.04, 3), bundle, market=market)
    assert dual.price >= coarse.price


def test_dual_at_lending_rate_is_fair_estimator(borrow_setup, basis):
    model, bundle, market = borrow_setup
    fair = fair_price(call(100.0), model, bundle, basis, market=market, hedge=False)
    dual = borrowing_price_dual(call(100.0), model, 0.06, [-0.04], bundle, market=market)
    assert dual.price == pytest.approx(fair.price, rel=1e-12)


def test_dual_degenerate_interval(borrow_setup):
    model, bundle, market = borrow_setup
    dual = borrowing_price_dual(call(100.0), model, 0.04, [-0.04] * 5, bundle, market=market)
    p = dual.details["prices"]
    assert np.max(np.abs(p - p[0])) <= 1e-12 * p[0]


def test_dual_grid_checks(borrow_setup):
    model, bundle, market = borrow_setup
    with pytest.raises(ValueError, match="empty"):
        borrowing_price_dual(call(100.0), model, 0.06, [], bundle, market=market)
    with pytest.raises(ValueError, match=r"\[-R, -r\]"):
        borrowing_price_dual(call(100.0), model, 0.06, [-0.07], bundle, market=market)
