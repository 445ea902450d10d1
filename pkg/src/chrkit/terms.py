"""First-order terms, substitutions, matching, unification, exact arithmetic.

A term is a ``Var``, a ``Num`` (arbitrary-precision integer or exact
rational), or a ``Compound`` (functor applied to argument terms; atoms are
zero-argument compounds).  All terms are immutable and hashable.

Substitutions are plain dicts mapping ``Var`` to ``Term``.  Every function
here keeps them idempotent (applying twice equals applying once) and free of
identity bindings.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union


class EvalError(Exception):
    """Base class for arithmetic evaluation failures."""


class DivisionByZero(EvalError):
    pass


class NonGround(EvalError):
    pass


class UnknownFunction(EvalError):
    pass


@dataclass(frozen=True)
class Var:
    """A logic variable.  Identity is the (name, index) pair; renaming a
    variable only changes the index, so the printable name survives."""

    name: str
    index: int = 0

    def __repr__(self):
        return self.name if self.index == 0 else f"{self.name}_{self.index}"


@dataclass(frozen=True)
class Num:
    """An exact number: int, or Fraction with denominator > 1."""

    value: Union[int, Fraction]

    def __post_init__(self):
        v = self.value
        if isinstance(v, Fraction) and v.denominator == 1:
            object.__setattr__(self, "value", int(v))

    def __repr__(self):
        return str(self.value)


@dataclass(frozen=True)
class Compound:
    functor: str
    args: tuple = ()

    def __repr__(self):
        if not self.args:
            return self.functor
        return f"{self.functor}({', '.join(map(repr, self.args))})"


Term = Union[Var, Num, Compound]
Subst = dict  # Var -> Term

# Arithmetic functors understood by eval_arith, keyed by (functor, arity).
ARITH_OPS = {("+", 2), ("-", 2), ("*", 2), ("/", 2), ("mod", 2), ("-", 1)}


def atom(name: str) -> Compound:
    return Compound(name)


def num(value) -> Num:
    return Num(value)


def vars_of(t: Term, acc: Optional[list] = None) -> list:
    """Variables of a term in first-occurrence order (no duplicates)."""
    if acc is None:
        acc = []
    if isinstance(t, Var):
        if t not in acc:
            acc.append(t)
    elif isinstance(t, Compound):
        for a in t.args:
            vars_of(a, acc)
    return acc


def vars_of_all(ts: Iterable[Term]) -> list:
    acc: list = []
    for t in ts:
        vars_of(t, acc)
    return acc


def is_ground(t: Term) -> bool:
    if isinstance(t, Var):
        return False
    if isinstance(t, Compound):
        return all(is_ground(a) for a in t.args)
    return True


def apply_subst(sub: Subst, t: Term) -> Term:
    """Apply a substitution.  One pass suffices because substitutions are
    kept idempotent."""
    if not sub:
        return t
    if isinstance(t, Var):
        return sub.get(t, t)
    if isinstance(t, Compound) and t.args:
        return Compound(t.functor, tuple(apply_subst(sub, a) for a in t.args))
    return t


def compose_subst(old: Subst, new: Subst) -> Subst:
    """Composition old;new such that applying the result equals applying
    old then new.  Preserves idempotence, drops identity bindings."""
    out = {}
    for v, t in old.items():
        t2 = apply_subst(new, t)
        if t2 != v:
            out[v] = t2
    for v, t in new.items():
        if v not in out and t != v:
            out[v] = t
    return out


def occurs(v: Var, t: Term) -> bool:
    if isinstance(t, Var):
        return t == v
    if isinstance(t, Compound):
        return any(occurs(v, a) for a in t.args)
    return False


def match(patterns, subjects, sub: Optional[Subst] = None) -> Optional[Subst]:
    """One-way matching of a pattern conjunction against a subject
    conjunction.  Binds only pattern variables; subject variables are never
    bound.  Returns None when no match exists.

    Accepts single terms or equal-length sequences on both sides.
    """
    if not isinstance(patterns, (list, tuple)):
        patterns = [patterns]
        subjects = [subjects]
    if len(patterns) != len(subjects):
        return None
    sigma = dict(sub) if sub else {}
    stack = list(zip(patterns, subjects))
    while stack:
        p, s = stack.pop()
        if isinstance(p, Var):
            if p in sigma:
                if sigma[p] != s:
                    return None
            else:
                sigma[p] = s  # may be an identity binding; stripped below
        elif isinstance(p, Num):
            if p != s:
                return None
        else:
            if not (isinstance(s, Compound) and s.functor == p.functor
                    and len(s.args) == len(p.args)):
                return None
            stack.extend(zip(p.args, s.args))
    return {v: t for v, t in sigma.items() if v != t}


def unify(t1: Term, t2: Term, sub: Optional[Subst] = None) -> Optional[Subst]:
    """Most general unifier with occurs-check, or None."""
    sigma = dict(sub) if sub else {}
    stack = [(t1, t2)]
    while stack:
        a, b = stack.pop()
        a = apply_subst(sigma, a)
        b = apply_subst(sigma, b)
        if a == b:
            continue
        if isinstance(a, Var) or isinstance(b, Var):
            if not isinstance(a, Var):
                a, b = b, a
            if occurs(a, b):
                return None
            sigma = compose_subst(sigma, {a: b})
        elif (isinstance(a, Compound) and isinstance(b, Compound)
              and a.functor == b.functor and len(a.args) == len(b.args)):
            stack.extend(zip(a.args, b.args))
        else:
            return None
    return sigma


def rename_apart(terms, taboo) -> tuple:
    """Rename the variables of `terms` so the result shares none with
    `taboo`.  Bijective on variables; variables not in taboo are kept.

    Returns (renamed_terms, mapping) where mapping covers only the
    variables that actually changed.
    """
    taboo = set(taboo)
    own = vars_of_all(terms)
    avoid = taboo | set(own)
    mapping: Subst = {}
    for v in own:
        if v in taboo:
            k = v.index + 1
            while Var(v.name, k) in avoid:
                k += 1
            nv = Var(v.name, k)
            mapping[v] = nv
            avoid.add(nv)
    return tuple(apply_subst(mapping, t) for t in terms), mapping


def rename_fresh(terms, indexer: Iterator[int]) -> tuple:
    """Rename every variable of `terms` to a fresh index drawn from
    `indexer`.  Used to copy rules apart before matching or overlapping."""
    mapping: Subst = {}
    for v in vars_of_all(terms):
        mapping[v] = Var(v.name, next(indexer))
    return tuple(apply_subst(mapping, t) for t in terms), mapping


def eval_arith(t: Term):
    """Evaluate a ground arithmetic term to an int or Fraction.

    Exact: / is rational division, mod is integer flooring modulo.
    Raises NonGround, UnknownFunction, or DivisionByZero.
    """
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        raise NonGround(f"unbound variable {t} in arithmetic")
    assert isinstance(t, Compound)
    f, n = t.functor, len(t.args)
    if (f, n) not in ARITH_OPS:
        raise UnknownFunction(f"unknown arithmetic function {f}/{n}")
    if n == 1:
        return -eval_arith(t.args[0])
    a = eval_arith(t.args[0])
    b = eval_arith(t.args[1])
    if f == "+":
        return a + b
    if f == "-":
        return a - b
    if f == "*":
        return a * b
    if f == "/":
        if b == 0:
            raise DivisionByZero("division by zero")
        r = Fraction(a) / Fraction(b)
        return int(r) if r.denominator == 1 else r
    # mod: integers only
    if not (isinstance(a, int) and isinstance(b, int)):
        raise UnknownFunction("mod requires integer operands")
    if b == 0:
        raise DivisionByZero("mod by zero")
    return a % b


def partial_eval(t: Term) -> Term:
    """Replace every ground arithmetic subterm by its value; leave symbolic
    structure (unknown functors, unbound variables) untouched.

    DivisionByZero propagates: a ground division by zero is an error even
    in an otherwise symbolic term.
    """
    if isinstance(t, (Var, Num)):
        return t
    args = tuple(partial_eval(a) for a in t.args)
    if (t.functor, len(args)) in ARITH_OPS and all(isinstance(a, Num) for a in args):
        try:
            return Num(eval_arith(Compound(t.functor, args)))
        except (NonGround, UnknownFunction):
            pass  # e.g. mod on rationals: keep symbolic
    if args == t.args:
        return t
    return Compound(t.functor, args)
