"""Closed-form reference values, written independently of the package."""

from math import erf, exp, log, sqrt


def norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + erf(x / sqrt(2.0)))


def bs_call(s0: float, strike: float, r: float, vol: float, T: float) -> float:
    d1 = (log(s0 / strike) + (r + 0.5 * vol * vol) * T) / (vol * sqrt(T))
    d2 = d1 - vol * sqrt(T)
    return s0 * norm_cdf(d1) - strike * exp(-r * T) * norm_cdf(d2)


def bs_put(s0: float, strike: float, r: float, vol: float, T: float) -> float:
    return bs_call(s0, strike, r, vol, T) - s0 + strike * exp(-r * T)


def bs_digital(s0: float, strike: float, r: float, vol: float, T: float) -> float:
    d2 = (log(s0 / strike) + (r - 0.5 * vol * vol) * T) / (vol * sqrt(T))
    return exp(-r * T) * norm_cdf(d2)


def bond(r: float, T: float) -> float:
    return exp(-r * T)
