"""User nonlinearities ``f(x, u)`` written as arithmetic expressions.

Grammar: numbers, the identifiers ``u`` and ``x1 .. xd``, the operators
``+ - * / ^``, parentheses and the functions ``exp`` and ``sin``. The string is
tokenised and checked against this grammar before sympy sees it, and
``df/du`` comes from symbolic differentiation.
"""

from __future__ import annotations

import re

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .elliptic_solver import Nonlinearity
from .errors import ValidationError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")
_FUNCTIONS = {"exp": sympy.exp, "sin": sympy.sin}


def _tokens(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            break
        out.append(m.groups())
        pos = m.end()
    return out


def parse_expression(text: str, d: int):
    """Sympy expression and its symbols ``(u, x1..xd)`` after grammar checks."""
    if not isinstance(text, str) or not text.strip():
        raise ValidationError("empty expression")
    names = {"u"} | {f"x{i}" for i in range(1, d + 1)}
    prev = None
    depth = 0
    for number, ident, op in _tokens(text):
        if ident is not None and ident not in names and ident not in _FUNCTIONS:
            raise ValidationError(f"unknown identifier {ident!r}; allowed: u, x1..x{d}, exp, sin")
        if op is not None:
            if op not in "+-*/^()":
                raise ValidationError(f"unexpected character {op!r}")
            if op == "*" and prev == "*":
                raise ValidationError("use ^ for powers")
            depth += (op == "(") - (op == ")")
            if depth < 0:
                raise ValidationError("unbalanced parentheses")
        prev = op
    if depth:
        raise ValidationError("unbalanced parentheses")
    u = sympy.Symbol("u")
    xs = [sympy.Symbol(f"x{i}") for i in range(1, d + 1)]
    local = {"u": u, **{str(x): x for x in xs}, **_FUNCTIONS}
    try:
        expr = parse_expr(text, local_dict=local, global_dict={"Integer": sympy.Integer, "Float": sympy.Float,
                          "Rational": sympy.Rational, "Symbol": sympy.Symbol},
                          transformations=standard_transformations + (convert_xor,))
    except (SyntaxError, TypeError, ValueError) as exc:
        raise ValidationError(f"cannot parse {text!r}: {exc}") from exc
    if not isinstance(expr, sympy.Expr):
        raise ValidationError(f"{text!r} is not an arithmetic expression")
    return expr, u, xs


def custom_nonlinearity(text: str, d: int) -> Nonlinearity:
    """:class:`Nonlinearity` for ``text`` with the derivative taken symbolically in ``u``."""
    expr, u, xs = parse_expression(text, d)
    dexpr = sympy.diff(expr, u)
    f = sympy.lambdify([u, *xs], expr, "numpy")
    df = sympy.lambdify([u, *xs], dexpr, "numpy")

    def value(y, v):
        return np.broadcast_to(f(v, *y.T), (len(y),)).astype(float)

    def du(y, v):
        return np.broadcast_to(df(v, *y.T), (len(y),)).astype(float)

    return Nonlinearity(value, du, str(expr))


def builtin_nonlinearity(params: dict, d: int) -> Nonlinearity:
    kind = params.get("kind", "constant")
    c = float(params.get("c", 1.0))
    if kind == "constant":
        return Nonlinearity.constant(c)
    if kind == "affine":
        return Nonlinearity.affine(c)
    if kind == "quadratic":
        return Nonlinearity.quadratic(c)
    if kind == "custom":
        return custom_nonlinearity(params["expr"], d)
    raise ValidationError(f"unknown nonlinearity kind {kind!r}")
