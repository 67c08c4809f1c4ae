"""Time-0 values of a linear BSDE from the adjoint, explicit Euler and Picard solvers as steps grow."""

import argparse
import time

import numpy as np

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.bsde import LinearDriverSpec, PicardConfig, RegressionBasis, solve_backward_euler, solve_linear, solve_picard
from bsdelab.experiments import default_picard_weight
from bsdelab.pricing import call


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--steps", type=int, nargs="+", default=[10, 25, 50, 100])
    args = ap.parse_args()

    model = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
    spec = LinearDriverSpec(phi=0.5, beta=-0.3, gamma=np.array([0.2]))
    basis = RegressionBasis()
    print(f"{'steps':>6} {'linear':>10} {'euler':>10} {'picard':>10} {'iters':>5} {'max ratio':>9} {'bound':>6} {'sec':>5}")
    for K in args.steps:
        t0 = time.perf_counter()
        bundle = sample_brownian(make_time_grid(1.0, K), 1, args.paths, args.seed)
        market = evolve(model, bundle)
        xi = call(100.0).values(market)
        problem = spec.problem(xi, 1)
        lin = solve_linear(spec, xi, model, bundle, basis, market=market)
        eul = solve_backward_euler(problem, model, bundle, basis, market=market)
        pic = solve_picard(problem, model, bundle, basis, PicardConfig(default_picard_weight(spec.lipschitz(), 1.0)),
                           market=market)
        d = pic.diagnostics
        print(f"{K:6d} {lin.y0:10.4f} {eul.y0:10.4f} {pic.y0:10.4f} {d['iterations']:5d} "
              f"{max(d['ratios'], default=0):9.4f} {d['ratio_bound']:6.3f} {time.perf_counter() - t0:5.1f}")


if __name__ == "__main__":
    main()
