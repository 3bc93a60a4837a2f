"""Shared polynomial literal grammar.

Every module exchanges scalars and polynomials as decimal strings such as
``1+q+2*q^2`` or ``(q-1)*x``.  Formal grammar (EBNF, documented in the
README as the interface contract):

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor ('*'? factor)*
    factor := INT | VAR ['^' INT] | '(' expr ')'
    VAR    := 'q' | 'x' | "x'" | 'w' INT | 'w{' INT '}'
    INT    := [0-9]+

Juxtaposition multiplies, so ``2q^2`` and ``2*q^2`` agree.  ``x'`` and
``x`` name the same coordinate (the prime marks presentation only).
``w{k}`` and ``wk`` both name the k-th free generator.
"""

from __future__ import annotations

import re

from .errors import SpecError
from .exactpoly import IntPoly

_TOKEN = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<var>x'|x|q|w\{\d+\}|w\d+)|(?P<op>[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecError(f"unexpected character at position {pos}: {text[pos]!r}")
        if m.lastgroup == "int":
            tokens.append(("int", m.group("int")))
        elif m.lastgroup == "var":
            tokens.append(("var", m.group("var")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    return tokens


def _canonical_var(name: str) -> str:
    if name == "x'":
        return "x"
    if name.startswith("w{"):
        return "w" + name[2:-1]
    return name


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], allowed: set[str] | None):
        self.tokens = tokens
        self.pos = 0
        self.allowed = allowed

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise SpecError("unexpected end of polynomial")
        self.pos += 1
        return tok

    def parse_expr(self) -> IntPoly:
        sign = 1
        tok = self.peek()
        if tok == ("op", "-"):
            self.take()
            sign = -1
        elif tok == ("op", "+"):
            self.take()
        total = self.parse_term() * sign
        while True:
            tok = self.peek()
            if tok == ("op", "+"):
                self.take()
                total = total + self.parse_term()
            elif tok == ("op", "-"):
                self.take()
                total = total - self.parse_term()
            else:
                return total

    def parse_term(self) -> IntPoly:
        result = self.parse_factor()
        while True:
            tok = self.peek()
            if tok == ("op", "*"):
                self.take()
                result = result * self.parse_factor()
            elif tok is not None and (tok[0] in ("int", "var") or tok == ("op", "(")):
                result = result * self.parse_factor()
            else:
                return result

    def parse_factor(self) -> IntPoly:
        kind, text = self.take()
        if kind == "int":
            base = IntPoly.const(int(text))
        elif kind == "var":
            name = _canonical_var(text)
            if self.allowed is not None and name not in self.allowed:
                raise SpecError(f"variable {text!r} not allowed here")
            base = IntPoly.var(name)
        elif (kind, text) == ("op", "("):
            base = self.parse_expr()
            if self.take() != ("op", ")"):
                raise SpecError("missing closing parenthesis")
        else:
            raise SpecError(f"unexpected token {text!r}")
        if self.peek() == ("op", "^"):
            self.take()
            ekind, etext = self.take()
            if ekind != "int":
                raise SpecError("exponent must be a decimal integer")
            base = base ** int(etext)
        return base


def parse_poly(text: str, allowed: set[str] | None = None) -> IntPoly:
    """Parse a polynomial literal into an exact integer polynomial.

    allowed restricts variable names after canonicalization (x' -> x,
    w{k} -> wk); None accepts any variable the grammar can spell.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise SpecError("empty polynomial literal")
    parser = _Parser(tokens, allowed)
    poly = parser.parse_expr()
    if parser.peek() is not None:
        raise SpecError(f"trailing input after polynomial: {parser.peek()[1]!r}")
    return poly


def _var_key(var: str) -> tuple[int, int]:
    # q < x < w0 < w1 < ...
    if var == "q":
        return (0, 0)
    if var == "x":
        return (1, 0)
    if var.startswith("w"):
        return (2, int(var[1:]))
    return (3, 0)


def _monomial_key(m):
    return tuple((_var_key(v), e) for v, e in sorted(m, key=lambda ve: _var_key(ve[0])))


def _monomial_str(m) -> str:
    parts = []
    for var, e in sorted(m, key=lambda ve: _var_key(ve[0])):
        parts.append(var if e == 1 else f"{var}^{e}")
    return "*".join(parts)


def poly_to_string(poly: IntPoly) -> str:
    """Render in the shared grammar; canonical term order, round-trips."""
    if poly.is_zero():
        return "0"
    items = sorted(poly.terms.items(), key=lambda mc: (len(mc[0]), _monomial_key(mc[0])))
    pieces = []
    for m, c in items:
        mono = _monomial_str(m)
        mag = abs(c)
        if not mono:
            body = str(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{mag}*{mono}"
        if not pieces:
            pieces.append(body if c > 0 else f"-{body}")
        else:
            pieces.append(f"+{body}" if c > 0 else f"-{body}")
    return "".join(pieces)
