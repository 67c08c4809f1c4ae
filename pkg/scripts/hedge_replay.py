"""Terminal replication error of the BSDE hedge for an at-the-money call under step refinement."""

import argparse

import numpy as np

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.bsde import RegressionBasis
from bsdelab.pricing import call, fair_price, hedge_replay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--degree", type=int, default=4)
    ap.add_argument("--steps", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    args = ap.parse_args()

    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    claim = call(100.0)
    basis = RegressionBasis(degree=args.degree)
    print(f"{'steps':>6} {'price':>9} {'rmse':>8} {'rmse/S0':>8} {'mean err':>9}")
    for K in args.steps:
        bundle = sample_brownian(make_time_grid(1.0, K), 1, args.paths, args.seed)
        market = evolve(model, bundle)
        rep = fair_price(claim, model, bundle, basis, market=market)
        err = hedge_replay(rep, model, bundle, market=market) - claim.values(market)
        rmse = float(np.sqrt(np.mean(err**2)))
        print(f"{K:6d} {rep.details['bsde_y0']:9.4f} {rmse:8.4f} {rmse / 100:8.4%} {np.mean(err):9.4f}")


if __name__ == "__main__":
    main()
