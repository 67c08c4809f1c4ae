"""Invariant checks run at the configured scale.

Statistical checks use tolerances proportional to the measured Monte Carlo
standard error, so they widen automatically as the path count drops.
Algebraic checks use fixed absolute tolerances.  ``slack`` is tolerance minus
observed discrepancy: non-negative means the check passed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import erf, exp, log, sqrt
from typing import Callable, List

import numpy as np

from . import pricing, utility
from .bsde import (
    BsdeProblem,
    LinearDriverSpec,
    PicardConfig,
    RegressionBasis,
    apriori_gap,
    solve_backward_euler,
    solve_linear,
    solve_picard,
    supersolution_from_consumption,
)
from .bsde.solvers import _NodeRegressions, check_stability
from .concave import ControlGrid, essinf_envelope
from .config import ExperimentConfig
from .market import MarketModel, evolve
from .paths import make_time_grid, sample_brownian

Z3 = 3.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    slack: float
    stderr: float
    detail: dict = field(default_factory=dict)


def _check(name, slack, stderr=0.0, **detail) -> CheckResult:
    return CheckResult(name, bool(slack >= 0), float(slack), float(stderr), detail)


def black_scholes_call(s0, strike, r, sigma, T) -> float:
    cdf = lambda x: 0.5 * (1.0 + erf(x / sqrt(2.0)))  # noqa: E731
    d1 = (log(s0 / strike) + (r + 0.5 * sigma**2) * T) / (sigma * sqrt(T))
    return s0 * cdf(d1) - strike * exp(-r * T) * cdf(d1 - sigma * sqrt(T))


class _Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        nm = cfg.numerics
        self.N, self.K, self.T, self.seed = nm.paths, nm.steps, nm.horizon, nm.seed
        self.grid = make_time_grid(self.T, self.K)
        self.basis = RegressionBasis(degree=nm.degree)
        self.model = cfg.market.model()
        if self.model.d == self.model.n == 1:
            self.bs = self.model
        else:
            self.bs = MarketModel.black_scholes(0.05, 0.11, 0.2, 100.0)
        self._bundles = {}

    def bundle(self, n: int, offset: int = 0):
        key = (n, offset)
        if key not in self._bundles:
            self._bundles[key] = sample_brownian(self.grid, n, self.N, self.seed + offset, workers=self.cfg.numerics.workers)
        return self._bundles[key]


def check_rng(ctx: _Context) -> CheckResult:
    grid = make_time_grid(1.0, 4)
    a = sample_brownian(grid, 2, 3000, ctx.seed, workers=1).increments
    b = sample_brownian(grid, 2, 3000, ctx.seed, workers=3).increments
    c = sample_brownian(grid, 2, 1500, ctx.seed).increments
    same = np.array_equal(a, b) and np.array_equal(a[:1500], c)
    return _check("rng_reproducible", 0.0 if same else -1.0)


def check_bond(ctx: _Context) -> CheckResult:
    model = ctx.model
    bundle = ctx.bundle(model.n)
    rep = pricing.fair_price(pricing.bond(), model, bundle, ctx.basis, hedge=False)
    target = exp(-model.rate * ctx.T)
    tol = Z3 * rep.stderr + 1e-12
    return _check("bond_oracle", tol - abs(rep.price - target), rep.stderr, price=rep.price, closed_form=target)


def check_call(ctx: _Context) -> List[CheckResult]:
    m = ctx.bs
    bundle = ctx.bundle(1)
    market = evolve(m, bundle)
    s0 = float(m.s0[0])
    sigma = float(m.sigma[0, 0])
    target = black_scholes_call(s0, s0, m.rate, sigma, ctx.T)
    rep = pricing.fair_price(pricing.call(s0), m, bundle, ctx.basis, market=market)
    emm = pricing.emm_price(pricing.call(s0), m, bundle, market=market)
    y0, y0_se = rep.details["bsde_y0"], rep.details["bsde_y0_stderr"]
    return [
        _check("call_oracle_deflator", Z3 * rep.stderr - abs(rep.price - target), rep.stderr, price=rep.price, closed_form=target),
        _check("call_oracle_bsde", 0.01 * target + Z3 * y0_se - abs(y0 - target), y0_se, price=y0, closed_form=target),
        _check("emm_matches_deflator", 1e-10 * abs(rep.price) - abs(emm.price - rep.price), 0.0),
    ]


def _solve_spec(ctx: _Context):
    sv = ctx.cfg.solve
    if sv is not None:
        return LinearDriverSpec(sv.phi, sv.beta, np.array(sv.gamma)), ctx.model, sv.picard_weight
    return LinearDriverSpec(0.5, -0.3, np.array([0.2])), ctx.bs, None


def check_solvers(ctx: _Context) -> List[CheckResult]:
    spec, model, weight = _solve_spec(ctx)
    C = spec.lipschitz()
    check_stability(C, ctx.grid)
    bundle = ctx.bundle(model.n)
    market = evolve(model, bundle)
    xi = pricing.call(float(model.s0[0])).values(market)
    problem = spec.problem(xi, model.n)
    lin = solve_linear(spec, xi, model, bundle, ctx.basis, market=market)
    eul = solve_backward_euler(problem, model, bundle, ctx.basis, market=market)
    weight = weight if weight is not None else 4 * (2 + ctx.T) * C**2 + 1.0
    pic = solve_picard(problem, model, bundle, ctx.basis, PicardConfig(weight), market=market)
    se = max(lin.y0_stderr, eul.y0_stderr, pic.y0_stderr)
    tol = 0.005 * abs(lin.y0) + Z3 * se
    gap = max(abs(eul.y0 - lin.y0), abs(pic.y0 - lin.y0))
    ratios = pic.diagnostics["ratios"]
    bound = pic.diagnostics["ratio_bound"]
    return [
        _check("solver_agreement", tol - gap, se, linear=lin.y0, euler=eul.y0, picard=pic.y0),
        _check("picard_contraction", bound + 0.1 - max(ratios, default=0.0), 0.0, ratios=ratios, bound=bound),
    ]


def _random_linear(rng, n, scale=0.4):
    return float(rng.uniform(-scale, scale)), rng.uniform(-scale, scale, n)


def check_comparison(ctx: _Context, pairs: int = 5) -> CheckResult:
    m = ctx.bs
    bundle = ctx.bundle(1)
    market = evolve(m, bundle)
    regs = _NodeRegressions(market, ctx.basis)
    rng = np.random.default_rng([ctx.seed, 1])
    s0 = float(m.s0[0])
    worst = np.inf
    for _ in range(pairs):
        beta, gamma = _random_linear(rng, 1)
        phi, a, b, kappa = rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(0, 1), rng.uniform(0, 0.3)
        strike = s0 * rng.uniform(0.8, 1.2)
        xi2 = pricing.call(strike).values(market)
        xi1 = xi2 + a

        def f1(t, s, y, z, beta=beta, gamma=gamma, phi=phi, b=b):
            return phi + b + beta * y + z @ gamma

        def f2(t, s, y, z, beta=beta, gamma=gamma, phi=phi, kappa=kappa):
            return phi + beta * y + z @ gamma - kappa * np.abs(z[:, 0])

        C = max(abs(beta), float(np.linalg.norm(gamma)) + kappa)
        s1 = solve_backward_euler(BsdeProblem(f1, xi1, C), m, bundle, ctx.basis, market=market, regressions=regs)
        s2 = solve_backward_euler(BsdeProblem(f2, xi2, C), m, bundle, ctx.basis, market=market, regressions=regs)
        # pathwise ordering, judged against each fitted value's own standard error
        se = np.maximum(s1.path_stderr, s2.path_stderr)
        worst = min(worst, float(np.min(s1.Y.values - s2.Y.values + Z3 * se)))
    return _check("comparison", worst, 0.0, pairs=pairs)


def check_apriori(ctx: _Context, pairs: int = 3) -> CheckResult:
    m = ctx.bs
    bundle = ctx.bundle(1)
    market = evolve(m, bundle)
    regs = _NodeRegressions(market, ctx.basis)
    rng = np.random.default_rng([ctx.seed, 2])
    s0 = float(m.s0[0])
    worst = np.inf
    for _ in range(pairs):
        spec1 = LinearDriverSpec(*_apriori_coeffs(rng))
        spec2 = LinearDriverSpec(*_apriori_coeffs(rng))
        xi1 = pricing.call(s0 * rng.uniform(0.9, 1.1)).values(market)
        xi2 = pricing.call(s0 * rng.uniform(0.9, 1.1)).values(market)
        p1, p2 = spec1.problem(xi1, 1), spec2.problem(xi2, 1)
        a = solve_backward_euler(p1, m, bundle, ctx.basis, market=market, regressions=regs)
        b = solve_backward_euler(p2, m, bundle, ctx.basis, market=market, regressions=regs)
        C = p1.lipschitz
        rep = apriori_gap(a, b, p1, p2, C * (2 + C) + 1.0, m, bundle, market=market)
        worst = min(worst, rep.slack_y / max(rep.bound_y, 1e-300), rep.slack_z / max(rep.bound_z, 1e-300))
    return _check("apriori_estimates", worst, 0.0, pairs=pairs)


def _apriori_coeffs(rng):
    beta, gamma = _random_linear(rng, 1)
    return float(rng.uniform(-1, 1)), beta, gamma


def check_borrowing(ctx: _Context) -> List[CheckResult]:
    r, R = 0.04, 0.06
    m = MarketModel.black_scholes(r, r + 0.05, 0.2, 100.0)
    bundle = ctx.bundle(1)
    market = evolve(m, bundle)
    claim = pricing.call(100.0)
    primal = pricing.borrowing_price(claim, m, R, bundle, ctx.basis, market=market)
    dual = pricing.borrowing_price_dual(claim, m, R, pricing.dual_betas(R, r), bundle, market=market)
    lo = black_scholes_call(100.0, 100.0, r, 0.2, ctx.T)
    hi = black_scholes_call(100.0, 100.0, R, 0.2, ctx.T)
    se = max(primal.stderr, dual.stderr)
    same = pricing.borrowing_price(claim, m, r, bundle, ctx.basis, market=market)
    fair = pricing.fair_price(claim, m, bundle, ctx.basis, market=market, hedge=False)
    return [
        _check("borrowing_duality", 0.01 * dual.price + Z3 * se - abs(primal.price - dual.price), se,
               primal=primal.price, dual=dual.price),
        _check("borrowing_bracket", min(primal.price - lo, hi - primal.price) + Z3 * se, se, low=lo, high=hi),
        _check("borrowing_reduces_to_fair", 0.005 * fair.price + Z3 * max(same.stderr, fair.stderr) - abs(same.price - fair.price),
               fair.stderr, borrow=same.price, fair=fair.price),
    ]


def min_of_two_linear(m: MarketModel, bundle, basis, market=None):
    """Envelope and Euler ``Y_0`` for ``f = min(l1, l2)`` with ``l_i = F_i + beta_i y + gamma_i z``."""
    controls = ControlGrid(np.array([-0.05, -0.02]), np.array([[-0.3], [0.1]]), 1.0, offsets=[0.0, 0.4])
    market = evolve(m, bundle) if market is None else market
    xi = pricing.call(float(m.s0[0])).values(market)

    def f(t, s, y, z):
        a = 0.0 - 0.05 * y - 0.3 * z[:, 0]
        b = 0.4 - 0.02 * y + 0.1 * z[:, 0]
        return np.minimum(a, b)

    env = essinf_envelope(xi, controls, m, bundle, basis, market=market)
    eul = solve_backward_euler(BsdeProblem(f, xi, 0.3), m, bundle, basis, market=market)
    return env, eul


def check_envelope(ctx: _Context) -> CheckResult:
    bundle = ctx.bundle(1)
    env, eul = min_of_two_linear(ctx.bs, bundle, ctx.basis)
    se = float(np.max(env.y0_stderr_per_control))
    return _check("concave_envelope", 0.01 * abs(eul.y0) + Z3 * se - abs(env.y0 - eul.y0), se,
                  envelope=env.y0, euler=eul.y0)


def check_supersolution(ctx: _Context) -> CheckResult:
    m = ctx.bs
    bundle = ctx.bundle(1)
    market = evolve(m, bundle)
    spec = LinearDriverSpec(0.0, -0.05, np.array([-0.3]))
    xi = pricing.call(float(m.s0[0])).values(market)
    base = solve_backward_euler(spec.problem(xi, 1), m, bundle, ctx.basis, market=market)
    sup = supersolution_from_consumption(spec.problem(xi, 1), 0.5, m, bundle, ctx.basis, market=market)
    se = max(base.y0_stderr, sup.y0_stderr)
    return _check("supersolution_dominates", sup.y0 - base.y0 + Z3 * se, se)


def check_utility(ctx: _Context) -> List[CheckResult]:
    m = ctx.model
    bundle = ctx.bundle(m.n)
    market = evolve(m, bundle)
    full = utility.log_utility_value(1.0, m, utility.FullSpace(m.d), bundle, market=market)
    theta = market.theta
    closed = np.mean((market.rate + 0.5 * np.sum(theta**2, axis=-1))[:, :-1] @ ctx.grid.dt)
    c0 = np.full(m.d, 0.5 / m.d)
    single = utility.log_utility_value(1.0, m, utility.FinitePointSet(c0[None]), bundle, market=market)
    rho = np.einsum("pkdn,d->pkn", market.sigma, c0)
    direct = np.mean(
        (market.rate + np.einsum("pkn,pkn->pk", rho, theta) - 0.5 * np.sum(rho**2, axis=-1))[:, :-1] @ ctx.grid.dt
    )
    box = utility.Box(np.zeros(m.d), np.full(m.d, 0.5))
    rep = utility.log_utility_value(1.0, m, box, bundle, market=market)
    from .experiments import best_perturbation

    gain, se = best_perturbation(rep, box, m, bundle, market, 1.0, ctx.cfg.perturbations, ctx.seed)
    return [
        _check("utility_closed_form", Z3 * full.stderr + 1e-10 - abs(full.value - closed), full.stderr),
        _check("utility_single_point", 1e-10 - abs(single.value - direct), 0.0),
        _check("utility_optimality", Z3 * se - gain, se, best_gain=gain),
    ]


def check_projection(ctx: _Context, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng([ctx.seed, 3])
    worst = np.inf
    for i in range(instances):
        d = 1 + i % 3
        n = d + (i // 3) % 2
        sigma = np.eye(d, n) + 0.3 * rng.uniform(-1, 1, (d, n))
        theta = rng.normal(size=n)
        sets = [
            utility.Box(-rng.uniform(0, 1, d), rng.uniform(0, 1, d)),
            utility.Ball(rng.normal(size=d), rng.uniform(0.1, 1.0)),
            utility.FinitePointSet(rng.normal(size=(5, d))),
        ]
        for C in sets:
            p = utility.constraint_distance(theta, sigma, C)
            feasible = bool(C.contains(p.fraction[None])[0])
            cands = C.sample(rng, 1000)
            others = np.linalg.norm(theta - cands @ sigma, axis=1)
            s = float(np.min(others) - p.distance) + 1e-9
            worst = min(worst, s if feasible else -1.0)
    return _check("projection_feasibility", worst, 0.0, instances=instances)


SUITE: List[Callable] = [
    check_rng,
    check_bond,
    check_call,
    check_solvers,
    check_comparison,
    check_apriori,
    check_borrowing,
    check_envelope,
    check_supersolution,
    check_utility,
    check_projection,
]


def run_suite(cfg: ExperimentConfig) -> List[CheckResult]:
    ctx = _Context(cfg)
    if cfg.solve is not None:
        # an unstable configured driver is a precondition failure, not a failed check
        check_stability(cfg.solve.lipschitz(), ctx.grid)
    out: List[CheckResult] = []
    for fn in SUITE:
        res = fn(ctx)
        out.extend(res if isinstance(res, list) else [res])
    return out
