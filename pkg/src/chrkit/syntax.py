"""Surface syntax: parse rule programs and goals, pretty-print, and render
the first-order logical reading of a rule.

Rule forms accepted (each terminated by a period, `%` starts a line
comment):

    name @ H1 \\ H2 <=> Guard | Body.      simpagation
    H <=> Guard | Body.                    simplification
    H ==> Guard | Body.                    propagation

The guard part ``Guard |`` is optional.  Conjunctions are comma-separated.
Variables start uppercase, functors lowercase, integers are decimal, and
the infix operators +, -, *, /, mod have conventional precedence.  ``->``
is accepted as an inert infix constructor (grammar-rule constraints).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .terms import (Compound, Num, Term, Var, vars_of, vars_of_all)

BUILTIN_COMPARISONS = ("=", "==", "=/=", "<", "=<", ">", ">=")
BUILTIN_SYMBOLS = set(BUILTIN_COMPARISONS) | {"true"}
ARITH_FUNCTORS = {"+", "-", "*", "/", "mod"}


class ChrSyntaxError(Exception):
    def __init__(self, message, line=None, col=None):
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)
        self.line = line
        self.col = col


class ArityClash(ChrSyntaxError):
    pass


class BuiltinInHead(ChrSyntaxError):
    pass


def is_builtin_constraint(t: Term) -> bool:
    return (isinstance(t, Compound) and t.functor in BUILTIN_SYMBOLS
            and (len(t.args) == 2 or (t.functor == "true" and not t.args)))


TRUE = Compound("true")


@dataclass(frozen=True)
class Rule:
    """One rule: kept heads H1, removed heads H2, guard C, body B."""

    name: Optional[str]
    kept: tuple
    removed: tuple
    guard: tuple
    body: tuple
    source_index: int = 0

    @property
    def kind(self) -> str:
        if not self.removed:
            return "propagation"
        if not self.kept:
            return "simplification"
        return "simpagation"

    @property
    def heads(self) -> tuple:
        return self.kept + self.removed

    def label(self) -> str:
        return self.name if self.name else f"r{self.source_index + 1}"


@dataclass(frozen=True)
class Program:
    rules: tuple
    constraint_symbols: frozenset = field(default_factory=frozenset)

    def rule_label(self, index: int) -> str:
        return self.rules[index].label()


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""(?P<WS>\s+)
      | (?P<COMMENT>%[^\n]*)
      | (?P<NUMBER>\d+)
      | (?P<VAR>[A-Z][A-Za-z0-9_]*)
      | (?P<IDENT>[a-z][A-Za-z0-9_]*)
      | (?P<SYM><=>|==>|=/=|=<|>=|==|->|[@\\|,.()+\-*/<>=$])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ChrSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("WS", "COMMENT"):
            toks.append(_Tok(kind, lexeme, line, col))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    toks.append(_Tok("EOF", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self, ahead=0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.peek()
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind != "EOF"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind == "EOF":
            raise ChrSyntaxError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                                 t.line, t.col)
        return self.next()

    def error(self, message) -> "ChrSyntaxError":
        t = self.peek()
        return ChrSyntaxError(message, t.line, t.col)

    # expression grammar ---------------------------------------------------

    def parse_constraint(self) -> Term:
        lhs = self.parse_arrow()
        t = self.peek()
        if t.text in BUILTIN_COMPARISONS and t.kind == "SYM":
            self.next()
            rhs = self.parse_arrow()
            return Compound(t.text, (lhs, rhs))
        return lhs

    def parse_arrow(self) -> Term:
        lhs = self.parse_additive()
        if self.at("->"):
            self.next()
            rhs = self.parse_additive()
            return Compound("->", (lhs, rhs))
        return lhs

    def parse_additive(self) -> Term:
        t = self.parse_multiplicative()
        while self.peek().text in ("+", "-") and self.peek().kind == "SYM":
            op = self.next().text
            rhs = self.parse_multiplicative()
            t = Compound(op, (t, rhs))
        return t

    def parse_multiplicative(self) -> Term:
        t = self.parse_unary()
        while True:
            tok = self.peek()
            if tok.kind == "SYM" and tok.text in ("*", "/"):
                op = self.next().text
            elif tok.kind == "IDENT" and tok.text == "mod":
                op = self.next().text
            else:
                return t
            rhs = self.parse_unary()
            t = Compound(op, (t, rhs))

    def parse_unary(self) -> Term:
        if self.at("-"):
            self.next()
            inner = self.parse_unary()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Compound("-", (inner,))
        return self.parse_primary()

    def parse_primary(self) -> Term:
        t = self.peek()
        if t.kind == "NUMBER":
            self.next()
            return Num(int(t.text))
        if t.kind == "VAR":
            self.next()
            return Var(t.text)
        if t.kind == "IDENT":
            self.next()
            if self.accept("("):
                args = [self.parse_arrow()]
                while self.accept(","):
                    args.append(self.parse_arrow())
                self.expect(")")
                return Compound(t.text, tuple(args))
            return Compound(t.text)
        if self.accept("("):
            inner = self.parse_constraint()
            self.expect(")")
            return inner
        raise self.error(f"expected a term, found {t.text or 'end of input'!r}")

    def parse_conjunction(self) -> list:
        items = [self.parse_constraint()]
        while self.accept(","):
            items.append(self.parse_constraint())
        return items

    # rules ----------------------------------------------------------------

    def try_rule_name(self) -> Optional[str]:
        # name @ ...  where name is IDENT('-'IDENT)* (hyphenated names occur
        # in grammar-style rule sets)
        save = self.pos
        if self.peek().kind != "IDENT":
            return None
        parts = [self.next().text]
        while self.peek().text == "-" and self.peek(1).kind == "IDENT":
            self.next()
            parts.append(self.next().text)
        if self.accept("@"):
            return "-".join(parts)
        self.pos = save
        return None

    def parse_rule(self, index: int) -> Rule:
        name = self.try_rule_name()
        first = self.parse_conjunction()
        if self.accept("\\"):
            kept = tuple(first)
            removed = tuple(self.parse_conjunction())
            self.expect("<=>")
        elif self.accept("<=>"):
            kept = ()
            removed = tuple(first)
        elif self.accept("==>"):
            kept = tuple(first)
            removed = ()
        else:
            raise self.error("expected '<=>', '==>' or '\\' after rule head")
        items = self.parse_conjunction()
        if self.accept("|"):
            guard = tuple(items)
            body = tuple(self.parse_conjunction())
        else:
            guard = ()
            body = tuple(items)
        self.expect(".")
        # `true` conjuncts carry no content in guards or bodies
        guard = tuple(g for g in guard if g != TRUE)
        body = tuple(b for b in body if b != TRUE)
        return Rule(name, kept, removed, guard, body, index)


def parse_goal(text: str) -> tuple:
    """Parse a comma-separated conjunction of constraints.  Empty input is
    the empty conjunction."""
    p = _Parser(text)
    if p.peek().kind == "EOF":
        return ()
    items = p.parse_conjunction()
    if p.peek().kind != "EOF":
        raise p.error(f"unexpected {p.peek().text!r} after goal")
    return tuple(items)


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.parse_constraint()
    if p.peek().kind != "EOF":
        raise p.error(f"unexpected {p.peek().text!r} after term")
    return t


def parse_program(text: str) -> Program:
    p = _Parser(text)
    rules = []
    while p.peek().kind != "EOF":
        rules.append(p.parse_rule(len(rules)))
    prog = Program(tuple(rules))
    _validate(prog)
    return Program(tuple(rules), frozenset(_user_symbols(prog)))


def _user_symbols(prog: Program):
    syms = set()
    for r in prog.rules:
        for t in r.heads:
            syms.add((t.functor, len(t.args)))
        for t in r.body:
            if isinstance(t, Compound) and not is_builtin_constraint(t):
                syms.add((t.functor, len(t.args)))
    return syms


def _functor_arities(t: Term, acc: dict, where: str):
    if isinstance(t, Compound):
        key = t.functor
        n = len(t.args)
        if key in ARITH_FUNCTORS or key in BUILTIN_SYMBOLS or key == "->":
            pass  # fixed-arity operators
        elif key in acc and acc[key] != n:
            raise ArityClash(
                f"functor {key} used with arities {acc[key]} and {n} ({where})")
        else:
            acc[key] = n
        for a in t.args:
            _functor_arities(a, acc, where)


def _validate(prog: Program):
    arities: dict = {}
    names = set()
    for r in prog.rules:
        where = f"rule {r.label()}"
        if r.name is not None:
            if r.name in names:
                raise ChrSyntaxError(f"duplicate rule name {r.name!r}")
            names.add(r.name)
        if not r.heads:
            raise ChrSyntaxError(f"{where}: empty head")
        for h in r.heads:
            if not isinstance(h, Compound):
                raise ChrSyntaxError(f"{where}: head must be a constraint, got {h!r}")
            if h.functor in BUILTIN_SYMBOLS:
                raise BuiltinInHead(f"{where}: built-in {h.functor!r} in head")
        head_vars = set(vars_of_all(r.heads))
        for g in r.guard:
            if not is_builtin_constraint(g):
                raise ChrSyntaxError(f"{where}: guard {g!r} is not a built-in constraint")
            if not set(vars_of(g)) <= head_vars:
                raise ChrSyntaxError(
                    f"{where}: guard {g!r} uses variables not bound by the head")
        for b in r.body:
            if not isinstance(b, Compound):
                raise ChrSyntaxError(f"{where}: body item {b!r} is not a constraint")
            if not is_builtin_constraint(b):
                for arg in b.args:
                    _check_body_arith(arg, head_vars, where)
        for t in r.heads + r.guard + r.body:
            _functor_arities(t, arities, where)


def _contains_arith(t: Term) -> bool:
    if isinstance(t, Compound):
        if t.functor in ARITH_FUNCTORS and len(t.args) in (1, 2):
            return True
        return any(_contains_arith(a) for a in t.args)
    return False


def _check_body_arith(arg: Term, head_vars: set, where: str):
    # Arithmetic in a body argument is evaluated when the rule fires, so all
    # of its variables must be bound by the head matching.
    if _contains_arith(arg) and not set(vars_of(arg)) <= head_vars:
        raise ChrSyntaxError(
            f"{where}: arithmetic argument {term_text(arg)!r} uses variables "
            "not bound by the head")


# ---------------------------------------------------------------------------
# Pretty printing

_PREC = {
    "+": (500, "left"), "-": (500, "left"),
    "*": (400, "left"), "/": (400, "left"), "mod": (400, "left"),
}
_CMP_PREC = 700
_ARROW_PREC = 650


def term_text(t: Term, max_prec: int = 1200) -> str:
    if isinstance(t, Var):
        return repr(t)
    if isinstance(t, Num):
        return str(t.value)
    assert isinstance(t, Compound)
    f, args = t.functor, t.args
    if len(args) == 2 and f in BUILTIN_COMPARISONS:
        s = f"{term_text(args[0], _CMP_PREC - 1)}{f}{term_text(args[1], _CMP_PREC - 1)}"
        return f"({s})" if _CMP_PREC > max_prec else s
    if len(args) == 2 and f == "->":
        s = f"{term_text(args[0], _ARROW_PREC - 1)}->{term_text(args[1], _ARROW_PREC - 1)}"
        return f"({s})" if _ARROW_PREC > max_prec else s
    if len(args) == 2 and f in _PREC:
        prec, _ = _PREC[f]
        op = f" {f} " if f == "mod" else f
        s = f"{term_text(args[0], prec)}{op}{term_text(args[1], prec - 1)}"
        return f"({s})" if prec > max_prec else s
    if len(args) == 1 and f == "-":
        s = f"-{term_text(args[0], 200)}"
        return f"({s})" if 200 > max_prec else s
    if not args:
        return f
    return f"{f}({', '.join(term_text(a) for a in args)})"


def conj_text(ts, empty="true") -> str:
    if not ts:
        return empty
    return ", ".join(term_text(t) for t in ts)


def rule_text(r: Rule) -> str:
    parts = []
    if r.name:
        parts.append(f"{r.name} @ ")
    if r.kind == "simpagation":
        parts.append(f"{conj_text(r.kept)} \\ {conj_text(r.removed)} <=> ")
    elif r.kind == "simplification":
        parts.append(f"{conj_text(r.removed)} <=> ")
    else:
        parts.append(f"{conj_text(r.kept)} ==> ")
    if r.guard:
        parts.append(f"{conj_text(r.guard)} | ")
    parts.append(f"{conj_text(r.body)}.")
    return "".join(parts)


def program_text(p: Program) -> str:
    return "\n".join(rule_text(r) for r in p.rules) + "\n"


def logical_reading(r: Rule) -> str:
    """Render a rule as a universally closed logical equivalence, with body
    variables existentially quantified on the right-hand side."""
    head_guard_vars = vars_of_all(r.heads + r.guard)
    body_only = [v for v in vars_of_all(r.body) if v not in head_guard_vars]

    left_parts = [term_text(t) for t in r.heads]
    if r.guard:
        left_parts += [term_text(g) for g in r.guard]
    elif r.kind == "propagation":
        left_parts.append("true")  # keeps the two sides distinguishable
    left = " ∧ ".join(left_parts)

    right_parts = [term_text(t) for t in r.kept + r.guard + r.body]
    right = " ∧ ".join(right_parts) if right_parts else "true"
    if body_only:
        right = f"∃{','.join(map(repr, body_only))} ({right})"

    core = f"{left} ↔ {right}"
    if head_guard_vars:
        return f"∀{','.join(map(repr, head_guard_vars))} ({core})"
    return core
