"""Call prices when borrowing costs more than lending, primal BSDE against the dual maximum.

Prints one line per borrowing rate: the nonlinear BSDE price, the best
fictitious-market price over a beta grid, and the Black-Scholes prices at
the lending and borrowing rates that bracket both.
"""

import argparse
import time

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.bsde import RegressionBasis
from bsdelab.pricing import borrowing_price, borrowing_price_dual, call, dual_betas
from bsdelab.validation import black_scholes_call


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--lend", type=float, default=0.04)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.04, 0.05, 0.06, 0.08, 0.10])
    args = ap.parse_args()

    T, s0, strike, vol = 0.5, 100.0, 100.0, 0.2
    model = MarketModel.black_scholes(args.lend, args.lend + 0.05, vol, s0)
    bundle = sample_brownian(make_time_grid(T, args.steps), 1, args.paths, args.seed)
    market = evolve(model, bundle)
    basis = RegressionBasis()
    claim = call(strike)
    print(f"{'R':>6} {'bsde':>10} {'se':>8} {'dual':>10} {'se':>8} {'beta*':>7} {'BS(r)':>9} {'BS(R)':>9} {'sec':>5}")
    for R in args.rates:
        t0 = time.perf_counter()
        p = borrowing_price(claim, model, R, bundle, basis, market=market)
        d = borrowing_price_dual(claim, model, R, dual_betas(R, args.lend), bundle, market=market)
        lo = black_scholes_call(s0, strike, args.lend, vol, T)
        hi = black_scholes_call(s0, strike, R, vol, T)
        print(f"{R:6.3f} {p.price:10.4f} {p.stderr:8.4f} {d.price:10.4f} {d.stderr:8.4f} "
              f"{d.details['argmax_beta']:7.3f} {lo:9.4f} {hi:9.4f} {time.perf_counter() - t0:5.1f}")


if __name__ == "__main__":
    main()
