"""A small arithmetic expression language over named scalar fields.

Grammar (standard precedence, left associative):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Functions: log10(x), exp(x), abs(x), min(a, b), max(a, b).

Degenerate arithmetic is substituted, not raised: x/0 and log10(x <= 0)
both produce 0.0 and add the affected voxels to a degenerate counter that
evaluation reports alongside the result.  Everything else follows IEEE-754
double semantics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Union

import numpy as np

from .errors import EvalError, ExprSyntaxError
from .field import ScalarField, check_same_grid

FUNCTIONS = {"log10": 1, "exp": 1, "abs": 1, "min": 2, "max": 2}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "FieldExpr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "FieldExpr"
    right: "FieldExpr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["FieldExpr", ...]


FieldExpr = Union[Num, Ident, Neg, BinOp, Call]

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/(),])
""", re.VERBOSE)


class _Token(NamedTuple):
    kind: str   # number | ident | op | end
    text: str
    offset: int  # 1-based character offset


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ExprSyntaxError(f"expected {op!r}", tok.offset)
        self.advance()

    def parse_expr(self) -> FieldExpr:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> FieldExpr:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> FieldExpr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> FieldExpr:
        tok = self.advance()
        if tok.kind == "number":
            return Num(float(tok.text))
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {tok.text!r}", tok.offset)
                self.advance()
                args = [self.parse_expr()]
                while self.peek().kind == "op" and self.peek().text == ",":
                    self.advance()
                    args.append(self.parse_expr())
                self.expect_op(")")
                arity = FUNCTIONS[tok.text]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{tok.text} takes {arity} argument(s), got {len(args)}", tok.offset)
                return Call(tok.text, tuple(args))
            return Ident(tok.text)
        if tok.kind == "op" and tok.text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"expected a value, got {what}", tok.offset)


def parse_expression(text: str) -> FieldExpr:
    """Parse expression text into a tree; ExprSyntaxError carries the offset."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_expr()
    tail = parser.peek()
    if tail.kind != "end":
        raise ExprSyntaxError(f"unexpected trailing {tail.text!r}", tail.offset)
    return node


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_UNARY_PREC = 3


def _prec(node: FieldExpr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _UNARY_PREC
    return 9


def print_expression(expr: FieldExpr) -> str:
    """Canonical text form; parse(print(tree)) reproduces the tree."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Ident):
        return expr.name
    if isinstance(expr, Neg):
        inner = print_expression(expr.operand)
        if _prec(expr.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(print_expression(a) for a in expr.args)})"
    if isinstance(expr, BinOp):
        p = _PREC[expr.op]
        left = print_expression(expr.left)
        if _prec(expr.left) < p:
            left = f"({left})"
        right = print_expression(expr.right)
        # right operand binds one level tighter: - and / are not associative
        if _prec(expr.right) <= p:
            right = f"({right})"
        return f"{left} {expr.op} {right}"
    raise TypeError(f"not an expression node: {expr!r}")


def expression_idents(expr: FieldExpr) -> set[str]:
    if isinstance(expr, Ident):
        return {expr.name}
    if isinstance(expr, Neg):
        return expression_idents(expr.operand)
    if isinstance(expr, BinOp):
        return expression_idents(expr.left) | expression_idents(expr.right)
    if isinstance(expr, Call):
        out: set[str] = set()
        for a in expr.args:
            out |= expression_idents(a)
        return out
    return set()


class EvalResult(NamedTuple):
    field: ScalarField
    degenerate_count: int


def evaluate_expression(expr: FieldExpr, fields: Mapping[str, ScalarField],
                        name: str = "expr") -> EvalResult:
    """Voxel-wise evaluation of an expression over named fields.

    All referenced fields must share one grid.  Returns the result field
    together with the number of degenerate substitutions performed
    (division by zero, log10 of a non-positive value).
    """
    if isinstance(expr, str):
        expr = parse_expression(expr)
    if not fields:
        raise EvalError("no fields supplied; evaluation needs a grid to run on")
    missing = sorted(expression_idents(expr) - set(fields))
    if missing:
        raise EvalError(f"unresolved identifier(s): {', '.join(missing)}")
    check_same_grid(fields)
    proto = next(iter(fields.values()))
    shape = proto.dims
    count = 0

    def ev(node: FieldExpr) -> np.ndarray:
        nonlocal count
        if isinstance(node, Num):
            return np.full(shape, node.value, dtype=np.float64)
        if isinstance(node, Ident):
            return fields[node.name].values
        if isinstance(node, Neg):
            return -ev(node.operand)
        if isinstance(node, BinOp):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            zero = b == 0
            count += int(zero.sum())
            out = np.zeros(shape, dtype=np.float64)
            np.divide(a, b, out=out, where=~zero)
            return out
        if isinstance(node, Call):
            args = [ev(a) for a in node.args]
            if node.func == "log10":
                bad = args[0] <= 0
                count += int(bad.sum())
                out = np.zeros(shape, dtype=np.float64)
                np.log10(args[0], out=out, where=~bad)
                return out
            if node.func == "exp":
                return np.exp(args[0])
            if node.func == "abs":
                return np.abs(args[0])
            if node.func == "min":
                return np.minimum(args[0], args[1])
            return np.maximum(args[0], args[1])
        raise TypeError(f"not an expression node: {node!r}")

    # overflow etc. follow IEEE semantics; only the substitutions above are special
    with np.errstate(all="ignore"):
        values = ev(expr)
    return EvalResult(proto.with_values(values, name=name, units=""), count)
