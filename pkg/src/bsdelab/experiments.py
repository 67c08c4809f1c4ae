"""Experiment kinds driven by :class:`~bsdelab.config.ExperimentConfig`.

Each runner returns a list of :class:`Row` plus a diagnostics dict.  Rows
carry only numbers computed from the seeded path bundle, so identical
configurations give identical rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import pricing, utility
from .bsde import LinearDriverSpec, PicardConfig, RegressionBasis, solve_backward_euler, solve_linear, solve_picard
from .bsde.solvers import check_stability
from .config import ExperimentConfig
from .market import evolve
from .paths import DiscreteProcess, make_time_grid, sample_brownian


@dataclass(frozen=True)
class Row:
    name: str
    value: float
    stderr: Optional[float]
    method: str


def _bundle(cfg: ExperimentConfig, model):
    nm = cfg.numerics
    grid = make_time_grid(nm.horizon, nm.steps)
    return sample_brownian(grid, model.n, nm.paths, nm.seed, workers=nm.workers)


def run_price(cfg: ExperimentConfig):
    model = cfg.market.model()
    bundle = _bundle(cfg, model)
    market = evolve(model, bundle)
    claim = cfg.claim.build(model.d)
    basis = RegressionBasis(degree=cfg.numerics.degree)
    rep = pricing.fair_price(claim, model, bundle, basis, market=market)
    emm = pricing.emm_price(claim, model, bundle, market=market)
    rows = [Row("price", rep.price, rep.stderr, "deflator"), Row("price", emm.price, emm.stderr, "emm")]
    diag = {"claim": claim.label}
    if rep.hedge is not None:
        rows.append(Row("price", rep.details["bsde_y0"], rep.details["bsde_y0_stderr"], "bsde-linear"))
        units = rep.hedge.vector()[0, 0] / model.s0
        rows.extend(Row(f"hedge_units_asset{i + 1}_t0", float(u), None, "bsde-linear") for i, u in enumerate(units))
    else:
        diag["hedge"] = rep.details.get("hedge")
    return rows, diag


def run_borrow_price(cfg: ExperimentConfig):
    model = cfg.market.model()
    bundle = _bundle(cfg, model)
    market = evolve(model, bundle)
    claim = cfg.claim.build(model.d)
    basis = RegressionBasis(degree=cfg.numerics.degree)
    R = cfg.borrow_rate
    primal = pricing.borrowing_price(claim, model, R, bundle, basis, market=market)
    betas = pricing.dual_betas(R, cfg.market.rate, cfg.dual_points)
    dual = pricing.borrowing_price_dual(claim, model, R, betas, bundle, market=market)
    low = pricing.fair_price(claim, model, bundle, basis, market=market, hedge=False)
    high_model = pricing.with_rate(model, R)
    high = pricing.fair_price(claim, high_model, bundle, basis, hedge=False)
    rows = [
        Row("price", primal.price, primal.stderr, "borrowing-bsde"),
        Row("price", dual.price, dual.stderr, "borrowing-dual"),
        Row("argmax_beta", dual.details["argmax_beta"], None, "borrowing-dual"),
        Row("price_at_lending_rate", low.price, low.stderr, "deflator"),
        Row("price_at_borrowing_rate", high.price, high.stderr, "deflator"),
    ]
    return rows, {"claim": claim.label, "lipschitz": primal.details["lipschitz"]}


def run_utility(cfg: ExperimentConfig):
    model = cfg.market.model()
    bundle = _bundle(cfg, model)
    market = evolve(model, bundle)
    constraint = cfg.constraint.build(model.d)
    rep = utility.log_utility_value(cfg.wealth, model, constraint, bundle, market=market)
    logx = utility.log_wealth_terminal(cfg.wealth, rep.rho, model, bundle, market=market)
    rows = [
        Row("value", rep.value, rep.stderr, "direct-mc"),
        Row("expected_log_wealth", float(np.mean(logx)), float(np.std(logx) / np.sqrt(logx.size)), "wealth-replay"),
    ]
    rows.extend(
        Row(f"fraction_asset{i + 1}_t0", float(c), None, "projection") for i, c in enumerate(rep.fraction.vector()[0, 0])
    )
    if cfg.perturbations > 0:
        gap, se = best_perturbation(rep, constraint, model, bundle, market, cfg.wealth, cfg.perturbations, cfg.numerics.seed)
        rows.append(Row("best_perturbation_gain", gap, se, "perturbation"))
    return rows, dict(rep.details)


def best_perturbation(rep, constraint, model, bundle, market, wealth, count, seed) -> Tuple[float, float]:
    """Largest mean gain of ``log X_T`` over the optimum among random admissible perturbations.

    Gains are measured path-wise against the optimal strategy on the same
    paths, so the standard error is that of the paired difference.
    """
    base = utility.log_wealth_terminal(wealth, rep.rho, model, bundle, market=market)
    rng = np.random.default_rng([seed, 0x5EED])
    best, best_se = -np.inf, 0.0
    for _ in range(count):
        c = utility.perturbed_fractions(rep, constraint, rng)
        rho = DiscreteProcess(bundle.grid, utility.fraction_to_exposure(c, market))
        diff = utility.log_wealth_terminal(wealth, rho, model, bundle, market=market) - base
        m = float(np.mean(diff))
        if m > best:
            best, best_se = m, float(np.std(diff) / np.sqrt(diff.size))
    return best, best_se


def default_picard_weight(lipschitz: float, horizon: float) -> float:
    """Twice the contraction threshold, so the guaranteed ratio is below one half."""
    return 4 * (2 + horizon) * lipschitz**2 + 1.0


def run_solve(cfg: ExperimentConfig):
    model = cfg.market.model()
    sv = cfg.solve
    grid = make_time_grid(cfg.numerics.horizon, cfg.numerics.steps)
    if {"euler", "picard"} & set(sv.solvers):
        check_stability(sv.lipschitz(), grid)
    bundle = _bundle(cfg, model)
    market = evolve(model, bundle)
    basis = RegressionBasis(degree=cfg.numerics.degree)
    claim = cfg.claim.build(model.d) if cfg.claim is not None else pricing.call(float(model.s0[0]))
    xi = claim.values(market)
    spec = LinearDriverSpec(phi=sv.phi, beta=sv.beta, gamma=np.array(sv.gamma))
    problem = spec.problem(xi, model.n)
    rows: List[Row] = []
    diag: Dict = {"claim": claim.label, "lipschitz": sv.lipschitz()}
    if "linear" in sv.solvers:
        s = solve_linear(spec, xi, model, bundle, basis, market=market)
        rows.append(Row("y0", s.y0, s.y0_stderr, "linear"))
    if "euler" in sv.solvers:
        s = solve_backward_euler(problem, model, bundle, basis, market=market)
        rows.append(Row("y0", s.y0, s.y0_stderr, "backward-euler"))
    if "picard" in sv.solvers:
        weight = sv.picard_weight if sv.picard_weight is not None else default_picard_weight(sv.lipschitz(), grid.horizon)
        s = solve_picard(problem, model, bundle, basis, PicardConfig(weight), market=market)
        d = s.diagnostics
        rows.append(Row("y0", s.y0, s.y0_stderr, "picard"))
        rows.append(Row("picard_iterations", float(d["iterations"]), None, "picard"))
        rows.append(Row("picard_max_ratio", float(max(d["ratios"], default=0.0)), None, "picard"))
        rows.append(Row("picard_ratio_bound", float(d["ratio_bound"]), None, "picard"))
        diag["picard_weight"] = weight
    return rows, diag


def run_validate(cfg: ExperimentConfig):
    from .validation import run_suite

    results = run_suite(cfg)
    rows = [Row(r.name, r.slack, r.stderr, "pass" if r.passed else "fail") for r in results]
    return rows, {"checks": len(results), "failed": [r.name for r in results if not r.passed],
                  "details": {r.name: r.detail for r in results}}


RUNNERS: Dict[str, Callable] = {
    "price": run_price,
    "borrow-price": run_borrow_price,
    "utility": run_utility,
    "solve": run_solve,
    "validate": run_validate,
}


def run_experiment(cfg: ExperimentConfig):
    return RUNNERS[cfg.kind](cfg)
