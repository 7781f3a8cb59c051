"""Arithmetic expressions for forcing terms and initial conditions.

Grammar (recursive descent, standard precedence):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are either free variables (axis names, bound at evaluation
time) or one of the allowed functions: sin, cos, exp, tanh, atan, pow.
Syntax errors raise :class:`ParseError` carrying line and column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from .errors import ArgumentError, ParseError

__all__ = ["parse_expression", "evaluate", "variables"]

FUNCTIONS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "exp": (np.exp, 1),
    "tanh": (np.tanh, 1),
    "atan": (np.arctan, 1),
    "pow": (np.power, 2),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple


@dataclass(frozen=True)
class Unary:
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/(),]))"
)


class _Parser:
    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col  # column of text[0] in the enclosing source
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                at = pos + (len(text[pos:]) - len(stripped))
                raise ParseError(f"unexpected character {text[at]!r}", line, col + at)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def _err(self, msg: str, tok=None):
        offset = tok[2] if tok else len(self.text)
        raise ParseError(msg, self.line, self.col + offset)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            self._err("unexpected end of expression")
        self.i += 1
        return tok

    def accept_op(self, *ops):
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] in ops:
            self.i += 1
            return tok[1]
        return None

    def expect_op(self, op):
        tok = self.peek()
        if not (tok and tok[0] == "op" and tok[1] == op):
            found = tok[1] if tok else "end of expression"
            self._err(f"expected {op!r}, found {found!r}" if tok else f"expected {op!r}", tok)
        self.i += 1

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            self._err(f"unexpected {tok[1]!r} after expression", tok)
        return node

    def expr(self):
        node = self.term()
        while True:
            op = self.accept_op("+", "-")
            if op is None:
                return node
            node = Binary(op, node, self.term())

    def term(self):
        node = self.unary()
        while True:
            op = self.accept_op("*", "/")
            if op is None:
                return node
            node = Binary(op, node, self.unary())

    def unary(self):
        if self.accept_op("-"):
            return Unary(self.unary())
        return self.primary()

    def primary(self):
        tok = self.next()
        kind, value, _ = tok
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if self.accept_op("("):
                if value not in FUNCTIONS:
                    self._err(f"unknown function {value!r}", tok)
                args = [self.expr()]
                while self.accept_op(","):
                    args.append(self.expr())
                self.expect_op(")")
                arity = FUNCTIONS[value][1]
                if len(args) != arity:
                    self._err(f"{value} takes {arity} argument(s), got {len(args)}", tok)
                return Call(value, tuple(args))
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        self._err(f"unexpected {value!r}", tok)


def parse_expression(text: str, line: int = 1, col: int = 1):
    """Parse an expression fragment; (line, col) locate text[0] in the
    enclosing source so error positions point into the original file."""
    parser = _Parser(text, line, col)
    if not parser.tokens:
        raise ParseError("empty expression", line, col)
    return parser.parse()


def variables(node) -> set:
    """Free variable names appearing in an expression tree."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.operand)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= variables(a)
        return out
    return set()


def evaluate(node, env: Mapping[str, object]):
    """Evaluate against an environment of scalars/arrays (numpy semantics)."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name not in env:
            raise ArgumentError(f"unbound variable {node.name!r} in expression")
        return env[node.name]
    if isinstance(node, Unary):
        return -evaluate(node.operand, env)
    if isinstance(node, Binary):
        left = evaluate(node.left, env)
        right = evaluate(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        return left / right
    if isinstance(node, Call):
        func = FUNCTIONS[node.func][0]
        return func(*(evaluate(a, env) for a in node.args))
    raise ArgumentError(f"not an expression node: {node!r}")
