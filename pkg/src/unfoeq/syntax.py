"""Signatures, formula ASTs, the concrete-syntax parser and the pretty printer.

The formula language is first-order logic over a split relational signature
(base symbols with fixed arities, plus distinguished binary symbols that are
interpreted as equivalence relations).  Concrete syntax::

    formula   := disjunct
    disjunct  := conjunct ('|' conjunct)*
    conjunct  := unary ('&' unary)*
    unary     := '~' unary | quantified | primary
    quantified:= ('forall' | 'exists') VAR+ '.' formula      (body extends right)
    primary   := '(' formula ')' | NAME '(' VAR (',' VAR)* ')' | VAR '=' VAR

``forall`` is only an abbreviation for a negated existential, so its body must
parse to a negation: ``forall x y . ~P(x,y)`` denotes ``~exists x y . P(x,y)``.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass


class FormulaError(Exception):
    """Base class for syntax-level errors."""


class ParseError(FormulaError):
    def __init__(self, message, line, column):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class SignatureError(FormulaError):
    pass


@dataclass(frozen=True)
class Signature:
    """A relational signature: base symbols with arities plus an ordered list
    of distinguished binary symbols (the equivalence relations)."""

    base: tuple[tuple[str, int], ...] = ()
    eqs: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set()
        for name, arity in self.base:
            if not name:
                raise SignatureError("empty symbol name")
            if arity < 1:
                raise SignatureError(f"symbol {name!r} has arity {arity}; need >= 1")
            if name in seen:
                raise SignatureError(f"duplicate symbol {name!r}")
            seen.add(name)
        for name in self.eqs:
            if not name:
                raise SignatureError("empty symbol name")
            if name in seen:
                raise SignatureError(f"duplicate symbol {name!r}")
            seen.add(name)

    @property
    def k(self):
        return len(self.eqs)

    def has(self, name):
        return name in self._arities()

    def is_eq(self, name):
        return name in self.eqs

    def is_base(self, name):
        return self.has(name) and not self.is_eq(name)

    def arity(self, name):
        try:
            return self._arities()[name]
        except KeyError:
            raise SignatureError(f"undeclared symbol {name!r}") from None

    @functools.lru_cache(maxsize=None)
    def _arities(self):
        d = {name: arity for name, arity in self.base}
        d.update({name: 2 for name in self.eqs})
        return d

    def symbols(self):
        """All symbol names: base symbols in declaration order, then eqs."""
        return tuple(name for name, _ in self.base) + self.eqs

    def max_arity(self):
        return max([a for _, a in self.base] + [2] * (1 if self.eqs else 0), default=1)

    def extend_unary(self, names):
        for n in names:
            if self.has(n):
                raise SignatureError(f"symbol {n!r} already declared")
        return Signature(self.base + tuple((n, 1) for n in names), self.eqs)

    def extend_eq(self, name):
        if self.has(name):
            raise SignatureError(f"symbol {name!r} already declared")
        return Signature(self.base, self.eqs + (name,))

    def drop_symbols(self, names):
        names = set(names)
        return Signature(
            tuple(p for p in self.base if p[0] not in names),
            tuple(e for e in self.eqs if e not in names),
        )

    @staticmethod
    def parse(text):
        """Parse a signature header: one `base NAME ARITY` or `eq NAME` per line."""
        base = []
        eqs = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "base" and len(parts) == 3:
                try:
                    arity = int(parts[2])
                except ValueError:
                    raise SignatureError(f"line {lineno}: bad arity {parts[2]!r}") from None
                base.append((parts[1], arity))
            elif parts[0] == "eq" and len(parts) == 2:
                eqs.append(parts[1])
            else:
                raise SignatureError(f"line {lineno}: expected 'base NAME ARITY' or 'eq NAME'")
        return Signature(tuple(base), tuple(eqs))

    def dump(self):
        lines = [f"base {n} {a}" for n, a in self.base]
        lines += [f"eq {n}" for n in self.eqs]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Abstract syntax


class Formula:
    __slots__ = ()

    def children(self):
        return ()

    def pretty(self):
        return pretty(self)

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Atom(Formula):
    symbol: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Equality(Formula):
    left: str
    right: str


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Neg(Formula):
    body: Formula

    def children(self):
        return (self.body,)


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple[str, ...]
    body: Formula

    def children(self):
        return (self.body,)


@dataclass(frozen=True)
class UnivNeg(Formula):
    """`forall x.. . ~body`, sugar for Neg(Exists(x.., body))."""

    vars: tuple[str, ...]
    body: Formula

    def children(self):
        return (self.body,)


@functools.lru_cache(maxsize=None)
def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset(f.args)
    if isinstance(f, Equality):
        return frozenset((f.left, f.right))
    if isinstance(f, (And, Or)):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, Neg):
        return free_vars(f.body)
    if isinstance(f, (Exists, UnivNeg)):
        return free_vars(f.body) - frozenset(f.vars)
    raise TypeError(f"not a formula: {f!r}")


def desugar(f: Formula) -> Formula:
    """Rewrite every UnivNeg node to its Neg(Exists(..)) form."""
    if isinstance(f, UnivNeg):
        return Neg(Exists(f.vars, desugar(f.body)))
    if isinstance(f, Atom) or isinstance(f, Equality):
        return f
    if isinstance(f, And):
        return And(desugar(f.left), desugar(f.right))
    if isinstance(f, Or):
        return Or(desugar(f.left), desugar(f.right))
    if isinstance(f, Neg):
        return Neg(desugar(f.body))
    if isinstance(f, Exists):
        return Exists(f.vars, desugar(f.body))
    raise TypeError(f"not a formula: {f!r}")


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Exists, UnivNeg)):
        return False
    return all(is_quantifier_free(c) for c in f.children()) if f.children() else True


def substitute(f: Formula, mapping: dict[str, str]) -> Formula:
    """Rename free variables.  Raises on variable capture."""
    if not mapping:
        return f
    if isinstance(f, Atom):
        return Atom(f.symbol, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, Equality):
        return Equality(mapping.get(f.left, f.left), mapping.get(f.right, f.right))
    if isinstance(f, And):
        return And(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Or):
        return Or(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Neg):
        return Neg(substitute(f.body, mapping))
    if isinstance(f, (Exists, UnivNeg)):
        inner = {k: v for k, v in mapping.items() if k not in f.vars}
        for v in inner.values():
            if v in f.vars:
                raise FormulaError(f"substitution captures bound variable {v!r}")
        body = substitute(f.body, inner)
        return type(f)(f.vars, body)
    raise TypeError(f"not a formula: {f!r}")


def conjoin(parts):
    parts = list(parts)
    if not parts:
        raise ValueError("empty conjunction")
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disjoin(parts):
    parts = list(parts)
    if not parts:
        raise ValueError("empty disjunction")
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def split_and(f: Formula):
    """Flatten a top-level conjunction into its conjuncts, left to right."""
    if isinstance(f, And):
        return split_and(f.left) + split_and(f.right)
    return [f]


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*|[()~&|=,.]|\S")
_KEYWORDS = {"forall", "exists"}
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")


class _Tokens:
    def __init__(self, text):
        self.toks = []
        for lineno, line in enumerate(text.splitlines() or [""], start=1):
            body = line.split("#", 1)[0]
            for m in _TOKEN_RE.finditer(body):
                self.toks.append((m.group(0), lineno, m.start() + 1))
        self.pos = 0
        last = self.toks[-1] if self.toks else ("", 1, 1)
        self.end = (None, last[1], last[2] + len(last[0]))

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else self.end

    def next(self):
        tok = self.peek()
        if tok[0] is not None:
            self.pos += 1
        return tok

    def expect(self, text):
        tok, line, col = self.next()
        if tok != text:
            raise ParseError(f"expected {text!r}, found {tok!r}", line, col)


def parse_formula(text: str, sig: Signature) -> Formula:
    """Parse a formula; atoms must use symbols declared in `sig`."""
    toks = _Tokens(text)
    f = _parse_disjunct(toks, sig)
    tok, line, col = toks.peek()
    if tok is not None:
        raise ParseError(f"unexpected trailing token {tok!r}", line, col)
    return f


def _parse_disjunct(toks, sig):
    f = _parse_conjunct(toks, sig)
    while toks.peek()[0] == "|":
        toks.next()
        f = Or(f, _parse_conjunct(toks, sig))
    return f


def _parse_conjunct(toks, sig):
    f = _parse_unary(toks, sig)
    while toks.peek()[0] == "&":
        toks.next()
        f = And(f, _parse_unary(toks, sig))
    return f


def _parse_var(toks):
    tok, line, col = toks.next()
    if tok is None or not _NAME_RE.match(tok) or tok in _KEYWORDS:
        raise ParseError(f"expected a variable, found {tok!r}", line, col)
    return tok


def _parse_unary(toks, sig):
    tok, line, col = toks.peek()
    if tok == "~":
        toks.next()
        return Neg(_parse_unary(toks, sig))
    if tok in _KEYWORDS:
        toks.next()
        vars_ = [_parse_var(toks)]
        while toks.peek()[0] not in (".", None):
            vars_.append(_parse_var(toks))
        toks.expect(".")
        body = _parse_disjunct(toks, sig)
        if len(set(vars_)) != len(vars_):
            raise ParseError("repeated variable in quantifier block", line, col)
        if tok == "exists":
            return Exists(tuple(vars_), body)
        if not isinstance(body, Neg):
            raise ParseError("'forall' abbreviates a negated existential; "
                             "its body must start with '~'", line, col)
        return UnivNeg(tuple(vars_), body.body)
    return _parse_primary(toks, sig)


def _parse_primary(toks, sig):
    tok, line, col = toks.next()
    if tok == "(":
        f = _parse_disjunct(toks, sig)
        toks.expect(")")
        return f
    if tok is None or not _NAME_RE.match(tok) or tok in _KEYWORDS:
        raise ParseError(f"expected an atom, found {tok!r}", line, col)
    if toks.peek()[0] == "(":
        toks.next()
        args = [_parse_var(toks)]
        while toks.peek()[0] == ",":
            toks.next()
            args.append(_parse_var(toks))
        toks.expect(")")
        if not sig.has(tok):
            raise ParseError(f"undeclared symbol {tok!r}", line, col)
        if sig.arity(tok) != len(args):
            raise ParseError(
                f"symbol {tok!r} has arity {sig.arity(tok)}, got {len(args)} arguments",
                line, col)
        return Atom(tok, tuple(args))
    if toks.peek()[0] == "=":
        toks.next()
        right = _parse_var(toks)
        return Equality(tok, right)
    nxt, nline, ncol = toks.peek()
    raise ParseError(f"expected '(' or '=' after {tok!r}, found {nxt!r}", nline, ncol)


# ---------------------------------------------------------------------------
# Pretty printer

_PREC_QUANT = 0
_PREC_OR = 1
_PREC_AND = 2
_PREC_UNARY = 3
_PREC_ATOM = 4


def _prec(f):
    if isinstance(f, (Exists, UnivNeg)):
        return _PREC_QUANT
    if isinstance(f, Or):
        return _PREC_OR
    if isinstance(f, And):
        return _PREC_AND
    if isinstance(f, Neg):
        return _PREC_UNARY
    return _PREC_ATOM


def pretty(f: Formula) -> str:
    """Render `f`; parse(pretty(f)) reproduces `f` exactly."""
    return _pp(f, 0)


def _pp(f, ctx):
    if isinstance(f, Atom):
        return f"{f.symbol}({', '.join(f.args)})"
    if isinstance(f, Equality):
        return f"{f.left} = {f.right}"
    if isinstance(f, And):
        s = f"{_pp(f.left, _PREC_AND)} & {_pp(f.right, _PREC_AND + 1)}"
    elif isinstance(f, Or):
        s = f"{_pp(f.left, _PREC_OR)} | {_pp(f.right, _PREC_OR + 1)}"
    elif isinstance(f, Neg):
        s = f"~{_pp(f.body, _PREC_UNARY + 1)}"
    elif isinstance(f, Exists):
        body = _pp(f.body, 0)
        if isinstance(f.body, (And, Or)):
            body = f"({body})"
        s = f"exists {' '.join(f.vars)} . {body}"
    elif isinstance(f, UnivNeg):
        s = f"forall {' '.join(f.vars)} . ~{_pp(f.body, _PREC_UNARY + 1)}"
    else:
        raise TypeError(f"not a formula: {f!r}")
    if _prec(f) < ctx:
        return f"({s})"
    return s
