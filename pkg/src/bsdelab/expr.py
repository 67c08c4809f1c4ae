"""Vectorized payoff expressions such as ``max(S1 - S2, 0) + 5 * (S1 > 110)``.

Only arithmetic, comparisons, numeric literals, the price names ``S`` or
``S1 .. Sd`` and a small whitelist of functions are accepted.  Anything else
(attribute access, subscripts, lambdas, unknown names) is rejected at parse
time, so evaluating an expression never executes arbitrary code.
"""

from __future__ import annotations

import ast
import operator
import re
from typing import Callable

import numpy as np


class ExpressionError(ValueError):
    pass


_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_COMPARE = {
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
}


def _fold(fn):
    def apply(*args):
        if len(args) < 2:
            raise ExpressionError("max/min need at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out

    return apply


_FUNCTIONS = {
    "max": _fold(np.maximum),
    "min": _fold(np.minimum),
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}
_PRICE = re.compile(r"S([1-9][0-9]*)?$")


def _check(node: ast.AST, d: int) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, d)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"only numeric literals are allowed, got {node.value!r}")
    elif isinstance(node, ast.Name):
        m = _PRICE.match(node.id)
        if m is None:
            raise ExpressionError(f"unknown name {node.id!r}; use S or S1..S{d}")
        if m.group(1) is None and d != 1:
            raise ExpressionError(f"S is ambiguous with {d} risky assets; use S1..S{d}")
        if m.group(1) is not None and not 1 <= int(m.group(1)) <= d:
            raise ExpressionError(f"{node.id} is out of range for {d} risky asset(s)")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINARY:
            raise ExpressionError(f"operator {type(node.op).__name__} is not allowed")
        _check(node.left, d)
        _check(node.right, d)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"operator {type(node.op).__name__} is not allowed")
        _check(node.operand, d)
    elif isinstance(node, ast.Compare):
        if len(node.ops) != 1:
            raise ExpressionError("chained comparisons are not allowed; compare two terms at a time")
        if type(node.ops[0]) not in _COMPARE:
            raise ExpressionError("only <, <=, >, >= comparisons are allowed")
        _check(node.left, d)
        _check(node.comparators[0], d)
    elif isinstance(node, ast.Call):
        name = node.func.id if isinstance(node.func, ast.Name) else type(node.func).__name__
        if name not in _FUNCTIONS:
            raise ExpressionError(f"function {name!r} is not allowed; use one of {', '.join(sorted(_FUNCTIONS))}")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        if name in ("max", "min") and len(node.args) < 2:
            raise ExpressionError(f"{name} needs at least two arguments")
        if name not in ("max", "min") and len(node.args) != 1:
            raise ExpressionError(f"{name} takes exactly one argument")
        for a in node.args:
            _check(a, d)
    else:
        raise ExpressionError(f"{type(node).__name__} is not allowed in a payoff expression")


def _eval(node: ast.AST, prices: np.ndarray):
    if isinstance(node, ast.Expression):
        return _eval(node.body, prices)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        idx = _PRICE.match(node.id).group(1)
        return prices[:, 0 if idx is None else int(idx) - 1]
    if isinstance(node, ast.BinOp):
        return _BINARY[type(node.op)](_eval(node.left, prices), _eval(node.right, prices))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, prices))
    if isinstance(node, ast.Compare):
        cmp = _COMPARE[type(node.ops[0])]
        return cmp(_eval(node.left, prices), _eval(node.comparators[0], prices)).astype(float)
    if isinstance(node, ast.Call):
        return _FUNCTIONS[node.func.id](*(_eval(a, prices) for a in node.args))
    raise ExpressionError(f"cannot evaluate {type(node).__name__}")  # pragma: no cover


def compile_payoff(text: str, d: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Parse ``text`` once and return ``payoff(prices (N, d)) -> (N,)``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error in payoff {text!r}: {exc.msg}") from None
    _check(tree, d)

    def payoff(prices: np.ndarray) -> np.ndarray:
        prices = np.asarray(prices, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(tree, prices)
        return np.broadcast_to(np.asarray(out, dtype=float), (prices.shape[0],)).copy()

    return payoff
