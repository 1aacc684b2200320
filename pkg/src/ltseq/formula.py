"""Formula syntax: parsing, printing, size, and negation normal form.

Grammar (ASCII): identifiers are propositional variables, `bot` / `top` the
constants, `~` negation (atoms only; one-sided syntax), `&`, `|`, `->`
(right associative), `[]` box, `<>` diamond, parentheses.  Unary operators
bind tightest, then `&`, then `|`, then `->`.
"""

from __future__ import annotations

from dataclasses import dataclass


class FormulaError(Exception):
    """Malformed formula text; carries the offending position."""

    def __init__(self, message: str, pos: int):
        super().__init__("%s (at position %d)" % (message, pos))
        self.pos = pos


class Formula:
    __slots__ = ()

    def sort_key(self) -> str:
        return "F" + fmt_formula(self)

    def __str__(self) -> str:
        return fmt_formula(self)


@dataclass(frozen=True, repr=False)
class PropVar(Formula):
    name: str

    def __repr__(self):
        return "PropVar(%r)" % self.name


@dataclass(frozen=True, repr=False)
class NegVar(Formula):
    """Negated propositional variable; occurs in one-sided formulas only."""

    name: str

    def __repr__(self):
        return "NegVar(%r)" % self.name


@dataclass(frozen=True, repr=False)
class Bottom(Formula):
    def __repr__(self):
        return "Bottom()"


@dataclass(frozen=True, repr=False)
class Top(Formula):
    def __repr__(self):
        return "Top()"


@dataclass(frozen=True, repr=False)
class And(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return "And(%r, %r)" % (self.left, self.right)


@dataclass(frozen=True, repr=False)
class Or(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return "Or(%r, %r)" % (self.left, self.right)


@dataclass(frozen=True, repr=False)
class Implies(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return "Implies(%r, %r)" % (self.left, self.right)


@dataclass(frozen=True, repr=False)
class Box(Formula):
    arg: Formula

    def __repr__(self):
        return "Box(%r)" % self.arg


@dataclass(frozen=True, repr=False)
class Diamond(Formula):
    arg: Formula

    def __repr__(self):
        return "Diamond(%r)" % self.arg


BOT = Bottom()
TOP = Top()

_RESERVED = {"bot", "top"}


def boxes(n: int, f: Formula) -> Formula:
    for _ in range(n):
        f = Box(f)
    return f


def diamonds(n: int, f: Formula) -> Formula:
    for _ in range(n):
        f = Diamond(f)
    return f


def size(f: Formula) -> int:
    """Connectives + propositional variables + logical constants."""
    if isinstance(f, (PropVar, NegVar, Bottom, Top)):
        return 1
    if isinstance(f, (Box, Diamond)):
        return 1 + size(f.arg)
    return 1 + size(f.left) + size(f.right)


def nnf(f: Formula) -> Formula:
    """Negation normal form; implications eliminated classically."""
    if isinstance(f, (PropVar, NegVar, Bottom, Top)):
        return f
    if isinstance(f, And):
        return And(nnf(f.left), nnf(f.right))
    if isinstance(f, Or):
        return Or(nnf(f.left), nnf(f.right))
    if isinstance(f, Implies):
        return Or(nnf_neg(f.left), nnf(f.right))
    if isinstance(f, Box):
        return Box(nnf(f.arg))
    if isinstance(f, Diamond):
        return Diamond(nnf(f.arg))
    raise TypeError("not a formula: %r" % (f,))


def nnf_neg(f: Formula) -> Formula:
    """NNF of the classical negation of f."""
    if isinstance(f, PropVar):
        return NegVar(f.name)
    if isinstance(f, NegVar):
        return PropVar(f.name)
    if isinstance(f, Bottom):
        return TOP
    if isinstance(f, Top):
        return BOT
    if isinstance(f, And):
        return Or(nnf_neg(f.left), nnf_neg(f.right))
    if isinstance(f, Or):
        return And(nnf_neg(f.left), nnf_neg(f.right))
    if isinstance(f, Implies):
        return And(nnf(f.left), nnf_neg(f.right))
    if isinstance(f, Box):
        return Diamond(nnf_neg(f.arg))
    if isinstance(f, Diamond):
        return Box(nnf_neg(f.arg))
    raise TypeError("not a formula: %r" % (f,))


def is_nnf(f: Formula) -> bool:
    if isinstance(f, (PropVar, NegVar, Bottom, Top)):
        return True
    if isinstance(f, (Box, Diamond)):
        return is_nnf(f.arg)
    if isinstance(f, (And, Or)):
        return is_nnf(f.left) and is_nnf(f.right)
    return False


# precedence: -> = 1 (right assoc), | = 2, & = 3, unary = 4

def _prec(f: Formula) -> int:
    if isinstance(f, Implies):
        return 1
    if isinstance(f, Or):
        return 2
    if isinstance(f, And):
        return 3
    return 4


def fmt_formula(f: Formula) -> str:
    if isinstance(f, PropVar):
        return f.name
    if isinstance(f, NegVar):
        return "~" + f.name
    if isinstance(f, Bottom):
        return "bot"
    if isinstance(f, Top):
        return "top"
    if isinstance(f, Box):
        return "[]" + _wrap(f.arg, 4)
    if isinstance(f, Diamond):
        return "<>" + _wrap(f.arg, 4)
    if isinstance(f, And):
        return "%s & %s" % (_wrap(f.left, 3), _wrap(f.right, 4))
    if isinstance(f, Or):
        return "%s | %s" % (_wrap(f.left, 2), _wrap(f.right, 3))
    if isinstance(f, Implies):
        # right associative: left argument needs strictly higher precedence
        return "%s -> %s" % (_wrap(f.left, 2), _wrap(f.right, 1))
    raise TypeError("not a formula: %r" % (f,))


def _wrap(f: Formula, minimum: int) -> str:
    text = fmt_formula(f)
    if _prec(f) < minimum:
        return "(" + text + ")"
    return text


class _Tokens:
    SYMBOLS = ("->", "[]", "<>", "&", "|", "~", "(", ")")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        if self.pos >= len(self.text):
            return None, self.pos
        for sym in self.SYMBOLS:
            if self.text.startswith(sym, self.pos):
                return sym, self.pos
        ch = self.text[self.pos]
        if ch.isalpha() or ch == "_":
            end = self.pos
            while end < len(self.text) and (self.text[end].isalnum() or self.text[end] == "_"):
                end += 1
            return self.text[self.pos:end], self.pos
        raise FormulaError("unexpected character %r" % ch, self.pos)

    def next(self):
        tok, pos = self.peek()
        if tok is not None:
            self.pos = pos + len(tok)
        return tok, pos


def parse_formula(text: str) -> Formula:
    toks = _Tokens(text)
    f = _parse_implies(toks)
    tok, pos = toks.peek()
    if tok is not None:
        raise FormulaError("unexpected %r after formula" % tok, pos)
    return f


def _parse_implies(toks: _Tokens) -> Formula:
    left = _parse_or(toks)
    tok, _ = toks.peek()
    if tok == "->":
        toks.next()
        return Implies(left, _parse_implies(toks))
    return left


def _parse_or(toks: _Tokens) -> Formula:
    f = _parse_and(toks)
    while True:
        tok, _ = toks.peek()
        if tok != "|":
            return f
        toks.next()
        f = Or(f, _parse_and(toks))


def _parse_and(toks: _Tokens) -> Formula:
    f = _parse_unary(toks)
    while True:
        tok, _ = toks.peek()
        if tok != "&":
            return f
        toks.next()
        f = And(f, _parse_unary(toks))


def _parse_unary(toks: _Tokens) -> Formula:
    tok, pos = toks.next()
    if tok is None:
        raise FormulaError("unexpected end of input", pos)
    if tok == "[]":
        return Box(_parse_unary(toks))
    if tok == "<>":
        return Diamond(_parse_unary(toks))
    if tok == "~":
        inner, ipos = toks.next()
        if inner is None or not inner[0].isalpha() or inner in _RESERVED or inner in _Tokens.SYMBOLS:
            raise FormulaError("~ applies to propositional variables only", ipos)
        return NegVar(inner)
    if tok == "(":
        f = _parse_implies(toks)
        close, cpos = toks.next()
        if close != ")":
            raise FormulaError("expected ')'", cpos)
        return f
    if tok == "bot":
        return BOT
    if tok == "top":
        return TOP
    if tok[0].isalpha() or tok[0] == "_":
        return PropVar(tok)
    raise FormulaError("unexpected %r" % tok, pos)
