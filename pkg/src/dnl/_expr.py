"""Tiny arithmetic grammar for coefficient fields such as ``1+0.5*sin(2*pi*x)``.

Numbers, the variable ``x``, the constants ``pi`` and ``e``, ``+ - * /``,
unary minus, parentheses and the functions ``sin``, ``cos``, ``exp``.
Parsing is delegated to :mod:`ast`; anything outside the grammar is rejected.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _eval(node, x):
    if isinstance(node, ast.Expression):
        return _eval(node.body, x)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return x
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand, x)
        return -v if isinstance(node.op, ast.USub) else v
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval(node.args[0], x))
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)}")


def compile_expression(src: str):
    """Return a vectorized ``f(x)`` for the expression ``src``."""
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {src!r}: {exc.msg}") from None
    _eval(tree, np.zeros(1))  # validate eagerly

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(_eval(tree, x), x.shape).astype(float)

    f.source = src
    return f
