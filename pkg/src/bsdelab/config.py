"""Experiment configuration: flat INI files with one level of sections.

Example::

    [experiment]
    kind = price

    [market]
    rate = 0.05
    mu = 0.11
    sigma = 0.2
    s0 = 100

    [numerics]
    paths = 100000
    steps = 50
    horizon = 1.0
    seed = 42

    [claim]
    type = call
    strike = 100

Vectors are comma separated; matrix rows are separated by ``;``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from math import comb
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import pricing, utility
from .expr import ExpressionError, compile_payoff
from .market import MarketModel

KINDS = ("price", "borrow-price", "utility", "solve", "validate")
CLAIMS = ("call", "put", "bond", "digital", "expr")
CONSTRAINTS = ("full", "box", "ball", "points")


class ConfigError(ValueError):
    """A missing or malformed field; ``field`` names it as ``section.key``."""

    def __init__(self, field: str, problem: str):
        super().__init__(f"{field}: {problem}")
        self.field = field


def _vector(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _matrix(text: str) -> Tuple[Tuple[float, ...], ...]:
    return tuple(tuple(float(x) for x in row.split(",") if x.strip()) for row in text.split(";") if row.strip())


class _Section:
    """Typed accessors that turn parse failures into :class:`ConfigError`."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.data = parser[name] if parser.has_section(name) else {}
        self.used = set()

    def _raw(self, key, required):
        self.used.add(key)
        if key not in self.data or not str(self.data[key]).strip():
            if required:
                raise ConfigError(f"{self.name}.{key}", "missing required field")
            return None
        return str(self.data[key]).strip()

    def get(self, key, conv, default=None, required=False):
        raw = self._raw(key, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.name}.{key}", f"cannot read {raw!r} ({exc})") from None

    def unknown(self):
        return sorted(set(self.data) - self.used)


@dataclass(frozen=True)
class MarketSpec:
    rate: float
    mu: Tuple[float, ...]
    sigma: Tuple[Tuple[float, ...], ...]
    s0: Tuple[float, ...] = (1.0,)

    def model(self) -> MarketModel:
        try:
            return MarketModel.black_scholes(self.rate, np.array(self.mu), np.array(self.sigma), np.array(self.s0))
        except ValueError as exc:
            raise ConfigError("market", str(exc)) from None

    def echo(self):
        return {
            "rate": repr(self.rate),
            "mu": ", ".join(map(repr, self.mu)),
            "sigma": "; ".join(", ".join(map(repr, row)) for row in self.sigma),
            "s0": ", ".join(map(repr, self.s0)),
        }


@dataclass(frozen=True)
class NumericsSpec:
    paths: int
    steps: int
    horizon: float
    seed: int
    degree: int = 4
    workers: int = 1

    def echo(self):
        return {k: repr(getattr(self, k)) for k in ("paths", "steps", "horizon", "seed", "degree", "workers")}


@dataclass(frozen=True)
class ClaimConfig:
    type: str
    strike: Optional[float] = None
    face: float = 1.0
    asset: int = 1
    expression: Optional[str] = None

    def build(self, d: int) -> pricing.ClaimSpec:
        if not 1 <= self.asset <= d:
            raise ConfigError("claim.asset", f"must be between 1 and {d}")
        a = self.asset - 1
        if self.type == "bond":
            return pricing.bond(self.face)
        if self.type == "expr":
            try:
                return pricing.ClaimSpec(compile_payoff(self.expression, d), self.expression)
            except ExpressionError as exc:
                raise ConfigError("claim.expression", str(exc)) from None
        if self.strike is None:
            raise ConfigError("claim.strike", f"missing required field for a {self.type}")
        factory = {"call": pricing.call, "put": pricing.put, "digital": pricing.digital}[self.type]
        return factory(self.strike, a)

    def echo(self):
        out = {"type": self.type}
        if self.type in ("call", "put", "digital"):
            out.update(strike=repr(self.strike), asset=repr(self.asset))
        elif self.type == "bond":
            out["face"] = repr(self.face)
        else:
            out["expression"] = self.expression
        return out


@dataclass(frozen=True)
class ConstraintConfig:
    type: str
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()
    center: Tuple[float, ...] = ()
    radius: float = 0.0
    points: Tuple[Tuple[float, ...], ...] = ()

    def build(self, d: int):
        try:
            if self.type == "full":
                return utility.FullSpace(d)
            if self.type == "box":
                return utility.Box(np.array(self.lower), np.array(self.upper))
            if self.type == "ball":
                return utility.Ball(np.array(self.center), self.radius)
            return utility.FinitePointSet(np.array(self.points))
        except ValueError as exc:
            raise ConfigError("constraint", str(exc)) from None

    def echo(self):
        out = {"type": self.type}
        if self.type == "box":
            out.update(lower=", ".join(map(repr, self.lower)), upper=", ".join(map(repr, self.upper)))
        elif self.type == "ball":
            out.update(center=", ".join(map(repr, self.center)), radius=repr(self.radius))
        elif self.type == "points":
            out["points"] = "; ".join(", ".join(map(repr, p)) for p in self.points)
        return out


@dataclass(frozen=True)
class SolveConfig:
    """Linear test driver ``phi + beta y + gamma . z`` and the solvers to run."""

    phi: float = 0.0
    beta: float = 0.0
    gamma: Tuple[float, ...] = (0.0,)
    solvers: Tuple[str, ...] = ("linear", "euler", "picard")
    picard_weight: Optional[float] = None

    def lipschitz(self) -> float:
        return max(abs(self.beta), float(np.linalg.norm(self.gamma)))

    def echo(self):
        out = {
            "phi": repr(self.phi),
            "beta": repr(self.beta),
            "gamma": ", ".join(map(repr, self.gamma)),
            "solvers": ", ".join(self.solvers),
        }
        if self.picard_weight is not None:
            out["picard_weight"] = repr(self.picard_weight)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    market: MarketSpec
    numerics: NumericsSpec
    out: str = "results"
    claim: Optional[ClaimConfig] = None
    constraint: Optional[ConstraintConfig] = None
    borrow_rate: Optional[float] = None
    dual_points: int = 21
    wealth: float = 1.0
    perturbations: int = 20
    solve: Optional[SolveConfig] = None
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def echo(self) -> str:
        """Canonical INI text that reproduces this configuration."""
        cp = configparser.ConfigParser()
        cp["experiment"] = {"kind": self.kind, "out": self.out}
        cp["market"] = self.market.echo()
        cp["numerics"] = self.numerics.echo()
        if self.claim is not None:
            cp["claim"] = self.claim.echo()
        if self.borrow_rate is not None:
            cp["borrow"] = {"rate": repr(self.borrow_rate), "dual_points": repr(self.dual_points)}
        if self.constraint is not None:
            cp["constraint"] = self.constraint.echo()
            cp["utility"] = {"wealth": repr(self.wealth), "perturbations": repr(self.perturbations)}
        elif self.kind == "validate":
            cp["utility"] = {"perturbations": repr(self.perturbations)}
        if self.solve is not None:
            cp["solve"] = self.solve.echo()
        lines = []
        for name in cp.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in cp[name].items())
            lines.append("")
        return "\n".join(lines)


def feature_count(d: int, degree: int) -> int:
    """Monomials of total degree ``<= degree`` in ``d`` variables, intercept included."""
    return comb(d + degree, degree)


def _positive(value, name):
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")
    return value


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse INI text; ``overrides`` may set ``seed``, ``paths``, ``steps`` or ``out``."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", f"not a valid INI file ({exc.__class__.__name__})") from None

    exp = _Section(cp, "experiment")
    kind = exp.get("kind", str, required=True)
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"{kind!r} is not one of {', '.join(KINDS)}")
    out = overrides.get("out") or exp.get("out", str, "results")

    mk = _Section(cp, "market")
    sigma = mk.get("sigma", _matrix, required=True)
    if not sigma or len({len(r) for r in sigma}) != 1:
        raise ConfigError("market.sigma", "rows must be non-empty and of equal length")
    d = len(sigma)
    market = MarketSpec(
        rate=mk.get("rate", float, required=True),
        mu=mk.get("mu", _vector, required=True),
        sigma=sigma,
        s0=mk.get("s0", _vector, (1.0,) * d),
    )
    if len(market.mu) != d:
        raise ConfigError("market.mu", f"needs {d} entries to match sigma")
    if len(market.s0) == 1 and d > 1:
        market = replace(market, s0=market.s0 * d)
    if len(market.s0) != d or min(market.s0) <= 0:
        raise ConfigError("market.s0", f"needs {d} positive entries")

    nm = _Section(cp, "numerics")
    nm.used.update(k for k in ("seed", "paths", "steps") if k in overrides)
    exp.used.update(k for k in ("out",) if k in overrides)
    seed = overrides["seed"] if "seed" in overrides else nm.get("seed", int, required=True)
    paths = overrides["paths"] if "paths" in overrides else nm.get("paths", int, required=True)
    steps = overrides["steps"] if "steps" in overrides else nm.get("steps", int, required=True)
    numerics = NumericsSpec(
        paths=int(_positive(paths, "numerics.paths")),
        steps=int(_positive(steps, "numerics.steps")),
        horizon=_positive(nm.get("horizon", float, required=True), "numerics.horizon"),
        seed=int(seed),
        degree=nm.get("degree", int, 4),
        workers=int(_positive(nm.get("workers", int, 1), "numerics.workers")),
    )
    if numerics.seed < 0:
        raise ConfigError("numerics.seed", "must be a non-negative integer")
    if numerics.degree < 0:
        raise ConfigError("numerics.degree", "must be non-negative")
    need = feature_count(d, numerics.degree)
    if numerics.paths < need:
        raise ConfigError("numerics.paths", f"{numerics.paths} paths cannot fit {need} regression features")

    kw = {}
    sections = {"experiment": exp, "market": mk, "numerics": nm}
    if kind in ("price", "borrow-price"):
        cl = _Section(cp, "claim")
        sections["claim"] = cl
        ctype = cl.get("type", str, required=True)
        if ctype not in CLAIMS:
            raise ConfigError("claim.type", f"{ctype!r} is not one of {', '.join(CLAIMS)}")
        claim = ClaimConfig(
            type=ctype,
            strike=cl.get("strike", float, required=ctype in ("call", "put", "digital")),
            face=cl.get("face", float, 1.0),
            asset=cl.get("asset", int, 1),
            expression=cl.get("expression", str, required=ctype == "expr"),
        )
        claim.build(d)  # validates expression and asset index early
        kw["claim"] = claim
    if kind == "borrow-price":
        br = _Section(cp, "borrow")
        sections["borrow"] = br
        kw["borrow_rate"] = br.get("rate", float, required=True)
        kw["dual_points"] = br.get("dual_points", int, 21)
        if kw["borrow_rate"] < market.rate:
            raise ConfigError("borrow.rate", "must be at least the lending rate market.rate")
        if kw["dual_points"] < 2:
            raise ConfigError("borrow.dual_points", "need at least 2 grid points")
        if len(sigma[0]) != d:
            raise ConfigError("market.sigma", "the borrowing market needs a square volatility matrix")
    if kind == "utility":
        cs = _Section(cp, "constraint")
        ut = _Section(cp, "utility")
        sections.update(constraint=cs, utility=ut)
        ctype = cs.get("type", str, required=True)
        if ctype not in CONSTRAINTS:
            raise ConfigError("constraint.type", f"{ctype!r} is not one of {', '.join(CONSTRAINTS)}")
        con = ConstraintConfig(
            type=ctype,
            lower=cs.get("lower", _vector, (), required=ctype == "box"),
            upper=cs.get("upper", _vector, (), required=ctype == "box"),
            center=cs.get("center", _vector, (), required=ctype == "ball"),
            radius=cs.get("radius", float, 0.0, required=ctype == "ball"),
            points=cs.get("points", _matrix, (), required=ctype == "points"),
        )
        if con.build(d).d != d:
            raise ConfigError("constraint", f"constraint vectors need {d} entries")
        kw["constraint"] = con
        kw["wealth"] = _positive(ut.get("wealth", float, 1.0), "utility.wealth")
        kw["perturbations"] = ut.get("perturbations", int, 20)
    if kind == "validate" and cp.has_section("utility"):
        ut = _Section(cp, "utility")
        sections["utility"] = ut
        kw["perturbations"] = ut.get("perturbations", int, 20)
    if kind in ("solve", "validate") and (kind == "solve" or cp.has_section("solve")):
        sv = _Section(cp, "solve")
        sections["solve"] = sv
        n = len(sigma[0])
        gamma = sv.get("gamma", _vector, (0.0,) * n)
        if len(gamma) != n:
            raise ConfigError("solve.gamma", f"needs {n} entries, one per Brownian motion")
        solvers = tuple(s.strip() for s in sv.get("solvers", str, "linear, euler, picard").split(",") if s.strip())
        bad = set(solvers) - {"linear", "euler", "picard"}
        if bad or not solvers:
            raise ConfigError("solve.solvers", f"unknown solver(s) {sorted(bad)}; use linear, euler, picard")
        kw["solve"] = SolveConfig(
            phi=sv.get("phi", float, 0.0),
            beta=sv.get("beta", float, 0.0),
            gamma=gamma,
            solvers=solvers,
            picard_weight=sv.get("picard_weight", float),
        )
        if kind == "solve":
            cl = _Section(cp, "claim")
            sections["claim"] = cl
            if cp.has_section("claim"):
                kw["claim"] = ClaimConfig(
                    type=cl.get("type", str, required=True),
                    strike=cl.get("strike", float),
                    face=cl.get("face", float, 1.0),
                    asset=cl.get("asset", int, 1),
                    expression=cl.get("expression", str),
                )
                if kw["claim"].type not in CLAIMS:
                    raise ConfigError("claim.type", f"{kw['claim'].type!r} is not one of {', '.join(CLAIMS)}")
                kw["claim"].build(d)
    warn = []
    for name in cp.sections():
        if name not in sections:
            warn.append(f"section [{name}] ignored for kind {kind}")
        else:
            warn.extend(f"unknown key {name}.{k} ignored" for k in sections[name].unknown())
    return ExperimentConfig(kind=kind, market=market, numerics=numerics, out=str(out), warnings=tuple(warn), **kw)


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)
