"""Optimal log utility under several portfolio constraints, with a perturbation certificate.

For each constraint set the script reports the value, the expected log of
terminal wealth when trading the projected fractions, and the best mean gain
found among random admissible perturbations (negative means none improved).
"""

import argparse

import numpy as np

from bsdelab import MarketModel, evolve, make_time_grid, sample_brownian
from bsdelab.experiments import best_perturbation
from bsdelab.utility import Ball, Box, FinitePointSet, FullSpace, log_utility_value, log_wealth_terminal


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=50_000)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--perturbations", type=int, default=20)
    args = ap.parse_args()

    model = MarketModel(rate=0.03, excess=np.array([0.06, 0.02]),
                        sigma=np.array([[0.2, 0.05], [0.0, 0.25]]), s0=np.ones(2))
    bundle = sample_brownian(make_time_grid(1.0, args.steps), 2, args.paths, args.seed)
    market = evolve(model, bundle)
    sets = {
        "unconstrained": FullSpace(2),
        "long-only <= 50%": Box(np.zeros(2), np.full(2, 0.5)),
        "ball r=0.3": Ball(np.zeros(2), 0.3),
        "three portfolios": FinitePointSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.5]])),
        "cash only": FinitePointSet(np.zeros((1, 2))),
    }
    print(f"{'constraint':<18} {'V(1)':>8} {'E log X':>8} {'se':>7} {'c1':>6} {'c2':>6} {'best gain':>10} {'se':>7}")
    for name, C in sets.items():
        rep = log_utility_value(1.0, model, C, bundle, market=market)
        lx = log_wealth_terminal(1.0, rep.rho, model, bundle, market=market)
        gain, se = best_perturbation(rep, C, model, bundle, market, 1.0, args.perturbations, args.seed)
        c = rep.fraction.vector()[0, 0]
        print(f"{name:<18} {rep.value:8.5f} {lx.mean():8.5f} {lx.std() / np.sqrt(lx.size):7.5f} "
              f"{c[0]:6.3f} {c[1]:6.3f} {gain:10.5f} {se:7.5f}")


if __name__ == "__main__":
    main()
