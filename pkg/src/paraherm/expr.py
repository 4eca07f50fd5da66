"""Small arithmetic expression language for structure definition files.

Supports numbers, coordinate names, ``+ - * / ^`` (``**`` also accepted),
parentheses, unary minus and the functions sin, cos, exp, log, sqrt.
Expressions are parsed once with :mod:`ast` and evaluated on floats or jets.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, Mapping, Sequence

from . import jets


class ExpressionError(ValueError):
    """Malformed or disallowed expression."""


_FUNCS = {
    "sin": jets.sin,
    "cos": jets.cos,
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def compile_expression(text: str, names: Sequence[str]) -> Callable[[Mapping], object]:
    """Parse ``text`` and return ``f(env)`` evaluating it with ``env[name]``."""
    if not isinstance(text, str):
        value = float(text)
        return lambda env: value
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    allowed = set(names)

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return lambda env: 3.141592653589793
            if node.id not in allowed:
                raise ExpressionError(f"unknown symbol {node.id!r} in {text!r}")
            key = node.id
            return lambda env: env[key]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            lhs, rhs = build(node.left), build(node.right)
            return lambda env: op(lhs(env), rhs(env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda env: -inner(env)
            return inner
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            fn = _FUNCS[node.func.id]
            arg = build(node.args[0])
            return lambda env: fn(arg(env))
        raise ExpressionError(f"unsupported construct in {text!r}")

    return build(tree)


def compile_array(entries, names: Sequence[str]):
    """Compile a nested list of expressions; returns ``f(xs)`` giving nested values."""
    if isinstance(entries, (list, tuple)):
        parts = [compile_array(e, names) for e in entries]
        return lambda env: [p(env) for p in parts]
    return compile_expression(entries, names)


def array_function(entries, names: Sequence[str]):
    """Adapter for :meth:`TensorField.from_function`: takes the coordinate list."""
    f = compile_array(entries, names)
    return lambda xs: f(dict(zip(names, xs)))
