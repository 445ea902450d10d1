"""The built-in constraint theory: syntactic equality with unification,
ground arithmetic comparisons, consistency, and guard entailment.

A ``BuiltinStore`` is an immutable solved form: an idempotent substitution
plus a consistency flag.  Told constraints only accumulate; nothing is ever
retracted.  All inconsistent stores are interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .terms import (Compound, Num, Term, apply_subst, compose_subst,
                    eval_arith, is_ground, partial_eval, unify,
                    EvalError, NonGround)
from .syntax import BUILTIN_SYMBOLS


class NonGroundComparison(Exception):
    """A comparison was told whose sides are not ground: an execution error,
    distinct from store inconsistency."""


class GuardEvaluationError(Exception):
    """Arithmetic failure while deciding a guard, with rule context."""

    def __init__(self, message, rule_label=None, ids=None):
        super().__init__(message)
        self.rule_label = rule_label
        self.ids = ids


@dataclass(frozen=True)
class BuiltinStore:
    bindings: dict = field(default_factory=dict)
    consistent: bool = True

    def __eq__(self, other):
        if not isinstance(other, BuiltinStore):
            return NotImplemented
        if not self.consistent or not other.consistent:
            return self.consistent == other.consistent
        return self.bindings == other.bindings


EMPTY_STORE = BuiltinStore()
FAILED_STORE = BuiltinStore({}, False)


def consistent(store: BuiltinStore) -> bool:
    return store.consistent


def normalize(store: BuiltinStore, t: Term) -> Term:
    """Apply the store's bindings to a term."""
    return apply_subst(store.bindings, t)


def _eval_sides(t: Compound):
    a = eval_arith(partial_eval(t.args[0]))
    b = eval_arith(partial_eval(t.args[1]))
    return a, b


def _compare(op: str, a, b) -> bool:
    if op == "<":
        return a < b
    if op == "=<":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def tell(store: BuiltinStore, c: Term) -> BuiltinStore:
    """Add a built-in constraint.  Equations unify into the solved form;
    ground comparisons act as checks.  A failed check yields an inconsistent
    store; a non-ground comparison raises NonGroundComparison."""
    if not store.consistent:
        return store
    if not isinstance(c, Compound) or c.functor not in BUILTIN_SYMBOLS:
        raise ValueError(f"not a built-in constraint: {c!r}")
    c = apply_subst(store.bindings, c)
    f = c.functor
    if f == "true":
        return store
    lhs, rhs = c.args
    if f == "=":
        mgu = unify(partial_eval(lhs), partial_eval(rhs))
        if mgu is None:
            return FAILED_STORE
        return BuiltinStore(compose_subst(store.bindings, mgu), True)
    if f == "==":
        a, b = partial_eval(lhs), partial_eval(rhs)
        if a == b:
            return store
        if is_ground(a) and is_ground(b):
            return FAILED_STORE
        raise NonGroundComparison(f"cannot decide {c!r}")
    if f == "=/=":
        a, b = partial_eval(lhs), partial_eval(rhs)
        if a == b:
            return FAILED_STORE
        if is_ground(a) and is_ground(b):
            return store
        raise NonGroundComparison(f"cannot decide {c!r}")
    # arithmetic comparison
    try:
        a, b = _eval_sides(c)
    except NonGround:
        raise NonGroundComparison(f"comparison {c!r} over non-ground terms")
    return store if _compare(f, a, b) else FAILED_STORE


def ask(store: BuiltinStore, c: Term) -> bool:
    """Entailment test.  True only when the constraint holds in every ground
    instance of the store: comparisons need ground sides, `=`/`==` need
    syntactic identity after normalization, `=/=` needs ground disequality.

    Arithmetic errors (division by zero, non-numeric operands) propagate as
    EvalError; callers attach rule context.
    """
    if not store.consistent:
        return True
    if not isinstance(c, Compound) or c.functor not in BUILTIN_SYMBOLS:
        raise ValueError(f"not a built-in constraint: {c!r}")
    c = apply_subst(store.bindings, c)
    f = c.functor
    if f == "true":
        return True
    lhs, rhs = c.args
    if f in ("=", "=="):
        return partial_eval(lhs) == partial_eval(rhs)
    if f == "=/=":
        a, b = partial_eval(lhs), partial_eval(rhs)
        return is_ground(a) and is_ground(b) and a != b
    try:
        a, b = _eval_sides(c)
    except NonGround:
        return False  # not entailed; the rule is simply not applicable
    return _compare(f, a, b)
