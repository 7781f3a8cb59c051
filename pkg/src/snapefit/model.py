"""The model description language and its parsed form.

A model file declares grid axes, the target field, optional exogenous
fields, and the equation to fit, written as

    anchor + sum_j theta_j * term_j + sum_i c_i * fixedterm_i = forcing

with one statement per line, ``#`` comments, and ``;`` terminators:

    axes x, t;
    field u;
    anchor D(u,t,1);
    term conv: u * D(u,x,1);
    term visc: D(u,x,2);
    # optional:
    exogenous w;
    fixedterm -1.0: w * u;
    forcing 0.42*cos(1.0*t);

Each term is a product of factors; a factor is the target field, an
exogenous field name, or ``D(target, axis, order)``.  Free coefficients
theta_j are named by their term labels and estimated in declaration order.

Syntax problems raise :class:`ParseError` with line/column; semantic
problems (undeclared names, missing statements) raise :class:`ModelError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Tuple, Union

from .errors import ModelError, ParseError
from .expressions import parse_expression, variables

__all__ = [
    "Factor",
    "Fixed",
    "Free",
    "Term",
    "ModelSpec",
    "parse_model",
    "parse_model_file",
]


@dataclass(frozen=True)
class Factor:
    """One multiplicand of a term: a field sampled on the grid, optionally
    differentiated (derivatives only apply to the target field)."""

    field: str
    deriv: Tuple[int, ...]

    @property
    def total_order(self) -> int:
        return sum(self.deriv)


@dataclass(frozen=True)
class Fixed:
    value: float


@dataclass(frozen=True)
class Free:
    name: str


@dataclass(frozen=True)
class Term:
    coefficient: Union[Fixed, Free]
    factors: Tuple[Factor, ...]


@dataclass(frozen=True)
class ModelSpec:
    axes: Tuple[str, ...]
    target: str
    exogenous: Tuple[str, ...]
    anchor: Term
    terms: Tuple[Term, ...]
    forcing: Optional[object]
    source: str = dataclass_field(compare=False, default="")

    @property
    def free_terms(self) -> Tuple[Term, ...]:
        return tuple(t for t in self.terms if isinstance(t.coefficient, Free))

    @property
    def fixed_terms(self) -> Tuple[Term, ...]:
        return tuple(t for t in self.terms if isinstance(t.coefficient, Fixed))

    @property
    def theta_names(self) -> Tuple[str, ...]:
        return tuple(t.coefficient.name for t in self.free_terms)

    @property
    def max_derivs(self) -> Tuple[int, ...]:
        """Per-axis maximum derivative order over anchor and all terms."""
        out = [0] * len(self.axes)
        for term in (self.anchor, *self.terms):
            for factor in term.factors:
                for a, d in enumerate(factor.deriv):
                    out[a] = max(out[a], d)
        return tuple(out)


_STMT_TOKEN = re.compile(r"(?P<ws>\s+)|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<punct>[(),:;*\-])")

_RESERVED = {"D", "axes", "field", "exogenous", "anchor", "term", "fixedterm", "forcing"}


class _Statement:
    """Token stream for one statement line, with column tracking."""

    def __init__(self, text: str, line: int):
        self.line = line
        self.tokens = []  # (kind, value, column)
        pos = 0
        while pos < len(text):
            m = _STMT_TOKEN.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), m.start() + 1))
            pos = m.end()
        self.i = 0
        self.end_col = len(text) + 1

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def err(self, msg, tok=None):
        col = tok[2] if tok else self.end_col
        raise ParseError(msg, self.line, col)

    def next(self, expect_kind=None, expect_value=None, what=None):
        tok = self.peek()
        if tok is None:
            self.err(f"expected {what or expect_value or expect_kind}, found end of statement")
        kind, value, _ = tok
        if expect_kind and kind != expect_kind or expect_value and value != expect_value:
            self.err(f"expected {what or expect_value or expect_kind}, found {value!r}", tok)
        self.i += 1
        return tok

    def accept(self, value):
        tok = self.peek()
        if tok and tok[1] == value:
            self.i += 1
            return True
        return False

    def expect_end(self):
        tok = self.peek()
        if tok is not None:
            self.err(f"unexpected {tok[1]!r} after statement", tok)

    def ident(self, what="an identifier"):
        tok = self.next("ident", what=what)
        return tok

    def integer(self, what="an integer"):
        tok = self.next("num", what=what)
        if not tok[1].isdigit():
            self.err(f"expected {what}, found {tok[1]!r}", tok)
        return int(tok[1])

    def real(self, what="a number"):
        sign = -1.0 if self.accept("-") else 1.0
        tok = self.next("num", what=what)
        return sign * float(tok[1])


def _parse_factor(stmt: _Statement):
    """Returns (field, axis_or_None, order, token) raw triple; canonical
    deriv tuples are resolved after all declarations are known."""
    tok = stmt.ident("a field name or D(...)")
    if tok[1] == "D":
        stmt.next(expect_value="(", what="'('")
        fld = stmt.ident("the differentiated field name")
        stmt.next(expect_value=",", what="','")
        axis = stmt.ident("an axis name")
        stmt.next(expect_value=",", what="','")
        order = stmt.integer("a derivative order")
        stmt.next(expect_value=")", what="')'")
        return (fld[1], axis[1], order, fld)
    return (tok[1], None, 0, tok)


def _parse_product(stmt: _Statement):
    factors = [_parse_factor(stmt)]
    while stmt.accept("*"):
        factors.append(_parse_factor(stmt))
    return factors


def parse_model(text: str) -> ModelSpec:
    """Parse model source text into a :class:`ModelSpec`."""
    axes = None
    target = None
    exogenous = []
    anchor_raw = None
    terms_raw = []  # (kind, name_or_value, factors, line)
    forcing = None
    seen_term_names = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        code = raw.split("#", 1)[0]
        if not code.strip():
            continue
        stripped = code.rstrip()
        if not stripped.endswith(";"):
            raise ParseError("statement must end with ';'", lineno, len(stripped) + 1)
        body = stripped[:-1]

        # forcing keeps its raw text so expression errors carry columns
        kw_match = re.match(r"\s*([A-Za-z_]\w*)", body)
        if kw_match and kw_match.group(1) == "forcing":
            if forcing is not None:
                raise ParseError("duplicate forcing statement", lineno, kw_match.start(1) + 1)
            expr_text = body[kw_match.end(1):]
            forcing = parse_expression(expr_text, lineno, kw_match.end(1) + 1)
            continue

        stmt = _Statement(body, lineno)
        keyword = stmt.next("ident", what="a statement keyword")

        if keyword[1] == "axes":
            if axes is not None:
                stmt.err("duplicate axes statement", keyword)
            axes = [stmt.ident("an axis name")]
            while stmt.accept(","):
                axes.append(stmt.ident("an axis name"))
            stmt.expect_end()
        elif keyword[1] == "field":
            if target is not None:
                stmt.err("duplicate field statement", keyword)
            target = stmt.ident("the target field name")
            stmt.expect_end()
        elif keyword[1] == "exogenous":
            exogenous.append(stmt.ident("an exogenous field name"))
            while stmt.accept(","):
                exogenous.append(stmt.ident("an exogenous field name"))
            stmt.expect_end()
        elif keyword[1] == "anchor":
            if anchor_raw is not None:
                stmt.err("duplicate anchor statement", keyword)
            anchor_raw = (_parse_product(stmt), lineno)
            stmt.expect_end()
        elif keyword[1] == "term":
            name = stmt.ident("a term name")
            if name[1] in seen_term_names:
                stmt.err(f"duplicate term name {name[1]!r}", name)
            seen_term_names.add(name[1])
            stmt.next(expect_value=":", what="':'")
            terms_raw.append(("free", name[1], _parse_product(stmt), lineno))
            stmt.expect_end()
        elif keyword[1] == "fixedterm":
            value = stmt.real("the fixed coefficient value")
            stmt.next(expect_value=":", what="':'")
            terms_raw.append(("fixed", value, _parse_product(stmt), lineno))
            stmt.expect_end()
        else:
            stmt.err(f"unknown statement keyword {keyword[1]!r}", keyword)

    # ---- semantic assembly ----
    if axes is None:
        raise ModelError("model declares no axes")
    axis_names = tuple(t[1] for t in axes)
    if len(set(axis_names)) != len(axis_names):
        raise ModelError(f"duplicate axis names {axis_names}")
    if target is None:
        raise ModelError("model declares no target field")
    target_name = target[1]
    exo_names = tuple(t[1] for t in exogenous)
    declared = [*axis_names, target_name, *exo_names]
    for name in declared:
        if name in _RESERVED:
            raise ModelError(f"{name!r} is a reserved word and cannot name an axis or field")
    if len(set(declared)) != len(declared):
        raise ModelError(f"axis/field/exogenous names must be distinct, got {declared}")
    if anchor_raw is None:
        raise ModelError("model declares no anchor term")

    def resolve(factors_raw, lineno):
        factors = []
        for fld, axis, order, tok in factors_raw:
            if axis is None:
                if fld != target_name and fld not in exo_names:
                    raise ModelError(f"line {lineno}: unknown field {fld!r} in term")
                factors.append(Factor(fld, (0,) * len(axis_names)))
            else:
                if fld != target_name:
                    raise ModelError(
                        f"line {lineno}: derivatives apply only to the target field "
                        f"{target_name!r}, got D({fld}, ...)"
                    )
                if axis not in axis_names:
                    raise ModelError(f"line {lineno}: unknown axis {axis!r} in D()")
                deriv = [0] * len(axis_names)
                deriv[axis_names.index(axis)] = order
                factors.append(Factor(fld, tuple(deriv)))
        return tuple(factors)

    anchor = Term(Fixed(1.0), resolve(*anchor_raw))
    terms = []
    for kind, label, factors_raw, lineno in terms_raw:
        coeff = Free(label) if kind == "free" else Fixed(label)
        factors = resolve(factors_raw, lineno)
        if not any(f.field == target_name for f in factors):
            raise ModelError(f"line {lineno}: every term must involve the target field")
        terms.append(Term(coeff, factors))
    if not any(f.field == target_name for f in anchor.factors):
        raise ModelError("the anchor must involve the target field")
    if not any(isinstance(t.coefficient, Free) for t in terms):
        raise ModelError("model has no free coefficients to estimate")

    if forcing is not None:
        extra = variables(forcing) - set(axis_names)
        if extra:
            raise ModelError(
                f"forcing may only reference axis variables {axis_names}, "
                f"found {sorted(extra)}"
            )

    return ModelSpec(
        axes=axis_names,
        target=target_name,
        exogenous=exo_names,
        anchor=anchor,
        terms=tuple(terms),
        forcing=forcing,
        source=text,
    )


def parse_model_file(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
