"""Closed-form expressions: parsing, exact differentiation, evaluation.

The grammar covers numbers, coordinate names, ``pi``, ``+ - * /`` (division
only by constant expressions), ``^`` with integer exponents, ``sin``, ``cos``
and parentheses.  Trees are immutable and hashable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expression", "Const", "Pi", "Var", "Sum", "Product", "Power", "Sin", "Cos",
    "ExpressionError", "parse", "differentiate", "evaluate", "simplify",
    "to_string", "variables", "compile_expressions", "ZERO", "ONE",
]


class ExpressionError(ValueError):
    """Raised for malformed expressions or unassigned variables."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class Expression:
    """Base class of expression tree nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expression):
    value: Fraction


@dataclass(frozen=True)
class Pi(Expression):
    pass


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Sum(Expression):
    terms: tuple


@dataclass(frozen=True)
class Product(Expression):
    factors: tuple


@dataclass(frozen=True)
class Power(Expression):
    base: Expression
    exponent: int


@dataclass(frozen=True)
class Sin(Expression):
    arg: Expression


@dataclass(frozen=True)
class Cos(Expression):
    arg: Expression


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
_FUNCTIONS = {"sin": Sin, "cos": Cos}


def const(value) -> Const:
    return Const(Fraction(value))


def is_constant(e: Expression) -> bool:
    """True if ``e`` contains no variables."""
    return not variables(e)


def variables(e: Expression) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (Const, Pi)):
        return frozenset()
    return frozenset().union(*(variables(c) for c in _children(e)))


def _children(e: Expression) -> tuple:
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Product):
        return e.factors
    if isinstance(e, Power):
        return (e.base,)
    if isinstance(e, (Sin, Cos)):
        return (e.arg,)
    return ()


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                                  len(text[:pos]) + (len(text[pos:]) - len(text[pos:].lstrip())))
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, coords: Sequence[str]):
        self.text = text
        self.coords = set(coords)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, v, pos = self.take()
        if v != value or kind == "end":
            found = "end of input" if kind == "end" else repr(v)
            raise ExpressionError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expression:
        e = self.sum()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {v!r}", pos)
        return e

    def sum(self) -> Expression:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, _ = self.take()
            t = self.term()
            terms.append(t if op == "+" else _negate(t))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Expression:
        factors = [self.unary()]
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            f = self.unary()
            if op == "*":
                factors.append(f)
                continue
            if not is_constant(f):
                raise ExpressionError("division by non-constant expression", pos)
            if evaluate(f, {}) == 0.0:
                raise ExpressionError("division by zero", pos)
            if isinstance(f, Const) and len(factors) == 1 and isinstance(factors[0], Const):
                factors[0] = Const(factors[0].value / f.value)
            elif isinstance(f, Const):
                factors.append(Const(1 / f.value))
            else:
                factors.append(Power(f, -1))
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def unary(self) -> Expression:
        kind, v, _ = self.peek()
        if kind == "op" and v in ("-", "+"):
            self.take()
            operand = self.unary()
            return operand if v == "+" else _negate(operand)
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, v, pos = self.peek()
        if kind == "op" and v == "^":
            self.take()
            exponent = self.exponent()
            if exponent < 0 and not is_constant(base):
                raise ExpressionError("negative exponent of a non-constant expression", pos)
            return Power(base, exponent)
        return base

    def exponent(self) -> int:
        kind, v, pos = self.peek()
        parens = kind == "op" and v == "("
        if parens:
            self.take()
        sign = 1
        kind, v, pos = self.peek()
        if kind == "op" and v in ("-", "+"):
            self.take()
            sign = -1 if v == "-" else 1
            kind, v, pos = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", v):
            raise ExpressionError("exponent must be an integer literal", pos)
        self.take()
        if parens:
            self.expect(")")
        return sign * int(v)

    def atom(self) -> Expression:
        kind, v, pos = self.take()
        if kind == "num":
            return Const(Fraction(v))
        if kind == "name":
            if v in _FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return _FUNCTIONS[v](arg)
            if v in self.coords:
                return Var(v)
            if v == "pi":
                return Pi()
            raise ExpressionError(f"unknown identifier {v!r}", pos)
        if kind == "op" and v == "(":
            e = self.sum()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(v)
        raise ExpressionError(f"syntax error: unexpected {found}", pos)


def _negate(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(-e.value)
    return Product((Const(Fraction(-1)), e))


def parse(text: str, coords: Sequence[str] = ()) -> Expression:
    """Parse ``text`` into an expression over the coordinate names ``coords``.

    >>> parse("sin(x1+x3)^2", ["x1", "x2", "x3", "x4"])
    Power(base=Sin(arg=Sum(terms=(Var(name='x1'), Var(name='x3')))), exponent=2)
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text)
    if not isinstance(text, str):
        raise ExpressionError(f"expected a string, got {type(text).__name__}")
    bad = [c for c in coords if c in _FUNCTIONS or c == "pi"]
    if bad:
        raise ExpressionError(f"reserved name used as coordinate: {bad[0]!r}")
    return _Parser(text, coords).parse()


# ---------------------------------------------------------------------------
# printing

def _const_str(value: Fraction) -> str:
    if value.denominator == 1:
        s = str(value.numerator)
    else:
        s = f"{value.numerator}/{value.denominator}"
    if value < 0 or value.denominator != 1:
        s = f"({s})"
    return s


def to_string(e: Expression) -> str:
    """Print ``e`` in the input grammar; ``parse`` of the result rebuilds ``e``."""
    if isinstance(e, Const):
        return _const_str(e.value)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Sum):
        return " + ".join(f"({to_string(t)})" if isinstance(t, Sum) else to_string(t)
                          for t in e.terms)
    if isinstance(e, Product):
        return "*".join(f"({to_string(f)})" if isinstance(f, (Sum, Product)) else to_string(f)
                        for f in e.factors)
    if isinstance(e, Power):
        base = to_string(e.base)
        if not isinstance(e.base, (Var, Pi, Sin, Cos)) and not (
                isinstance(e.base, Const) and e.base.value >= 0 and e.base.value.denominator == 1):
            base = f"({base})"
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exp}"
    if isinstance(e, Sin):
        return f"sin({to_string(e.arg)})"
    if isinstance(e, Cos):
        return f"cos({to_string(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expression, point: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision at the assignment ``point``."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Pi):
        return math.pi
    if isinstance(e, Var):
        try:
            return float(point[e.name])
        except KeyError:
            raise ExpressionError(f"unassigned variable {e.name!r}") from None
    if isinstance(e, Sum):
        total = 0.0
        for t in e.terms:
            total += evaluate(t, point)
        return total
    if isinstance(e, Product):
        total = 1.0
        for f in e.factors:
            total *= evaluate(f, point)
        return total
    if isinstance(e, Power):
        return evaluate(e.base, point) ** e.exponent
    if isinstance(e, Sin):
        return math.sin(evaluate(e.arg, point))
    if isinstance(e, Cos):
        return math.cos(evaluate(e.arg, point))
    raise TypeError(f"not an expression: {e!r}")


def _py_source(e: Expression, index: Mapping[str, int]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Pi):
        return repr(math.pi)
    if isinstance(e, Var):
        return f"x[{index[e.name]}]"
    if isinstance(e, Sum):
        return "(" + " + ".join(_py_source(t, index) for t in e.terms) + ")"
    if isinstance(e, Product):
        return "(" + " * ".join(_py_source(f, index) for f in e.factors) + ")"
    if isinstance(e, Power):
        return f"({_py_source(e.base, index)} ** {e.exponent})"
    if isinstance(e, Sin):
        return f"sin({_py_source(e.arg, index)})"
    if isinstance(e, Cos):
        return f"cos({_py_source(e.arg, index)})"
    raise TypeError(f"not an expression: {e!r}")


def compile_expressions(exprs: Sequence[Expression], coords: Sequence[str],
                        ) -> Callable[[Sequence[float]], np.ndarray]:
    """Compile a batch of expressions into one function of a coordinate vector.

    The returned callable maps a length-n sequence to a float array of
    ``len(exprs)`` values; it evaluates with the same semantics as
    :func:`evaluate`.
    """
    index = {c: i for i, c in enumerate(coords)}
    for e in exprs:
        missing = variables(e) - index.keys()
        if missing:
            raise ExpressionError(f"unassigned variable {sorted(missing)[0]!r}")
    body = ", ".join(_py_source(e, index) for e in exprs)
    src = f"def _f(x):\n    return _np.array([{body}{',' if len(exprs) == 1 else ''}], dtype=float)\n"
    namespace = {"sin": math.sin, "cos": math.cos, "_np": np}
    exec(compile(src, "<holosplit.expr>", "exec"), namespace)
    return namespace["_f"]


# ---------------------------------------------------------------------------
# differentiation and simplification

def differentiate(e: Expression, v: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to the coordinate ``v``."""
    return simplify(_diff(e, v))


def _diff(e: Expression, v: str) -> Expression:
    if isinstance(e, (Const, Pi)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Sum):
        return Sum(tuple(_diff(t, v) for t in e.terms))
    if isinstance(e, Product):
        terms = []
        for i, f in enumerate(e.factors):
            df = _diff(f, v)
            if df == ZERO:
                continue
            terms.append(Product(e.factors[:i] + (df,) + e.factors[i + 1:]))
        return Sum(tuple(terms)) if terms else ZERO
    if isinstance(e, Power):
        if e.exponent == 0:
            return ZERO
        db = _diff(e.base, v)
        if db == ZERO:
            return ZERO
        return Product((const(e.exponent), Power(e.base, e.exponent - 1), db))
    if isinstance(e, Sin):
        return Product((Cos(e.arg), _diff(e.arg, v)))
    if isinstance(e, Cos):
        return Product((const(-1), Sin(e.arg), _diff(e.arg, v)))
    raise TypeError(f"not an expression: {e!r}")


def simplify(e: Expression) -> Expression:
    """Constant folding, 0/1 identities and flattening of nested sums/products.

    No trigonometric or algebraic normalization is attempted.
    """
    if isinstance(e, (Const, Pi, Var)):
        return e
    if isinstance(e, Sin):
        arg = simplify(e.arg)
        return ZERO if arg == ZERO else Sin(arg)
    if isinstance(e, Cos):
        arg = simplify(e.arg)
        return ONE if arg == ZERO else Cos(arg)
    if isinstance(e, Power):
        base = simplify(e.base)
        if e.exponent == 0:
            return ONE
        if e.exponent == 1:
            return base
        if isinstance(base, Const) and (base.value != 0 or e.exponent > 0):
            return Const(base.value ** e.exponent)
        return Power(base, e.exponent)
    if isinstance(e, Sum):
        return _simplify_sum(e)
    if isinstance(e, Product):
        return _simplify_product(e)
    raise TypeError(f"not an expression: {e!r}")


def _flatten(items: Iterable[Expression], kind: type) -> list[Expression]:
    out = []
    for item in items:
        if isinstance(item, kind):
            out.extend(item.terms if kind is Sum else item.factors)
        else:
            out.append(item)
    return out


def _simplify_sum(e: Sum) -> Expression:
    terms = _flatten((simplify(t) for t in e.terms), Sum)
    total = Fraction(0)
    rest = []
    const_slot = None
    for t in terms:
        if isinstance(t, Const):
            total += t.value
            if const_slot is None:
                const_slot = len(rest)
                rest.append(None)
        else:
            rest.append(t)
    if const_slot is not None:
        if total == 0:
            del rest[const_slot]
        else:
            rest[const_slot] = Const(total)
    if not rest:
        return ZERO
    return rest[0] if len(rest) == 1 else Sum(tuple(rest))


def _simplify_product(e: Product) -> Expression:
    factors = _flatten((simplify(f) for f in e.factors), Product)
    coeff = Fraction(1)
    rest = []
    for f in factors:
        if isinstance(f, Const):
            coeff *= f.value
        else:
            rest.append(f)
    if coeff == 0:
        return ZERO
    if coeff != 1 or not rest:
        rest.insert(0, Const(coeff))
    return rest[0] if len(rest) == 1 else Product(tuple(rest))
