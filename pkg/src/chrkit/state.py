"""Execution states: identified user-constraint multiset, built-in store,
propagation history, global variables; state equivalence.

States are immutable snapshots.  Stored constraint terms are kept as
written; every observation (matching, printing, equivalence) goes through
``view``, which applies the current bindings and evaluates ground
arithmetic subterms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Optional

from . import builtins as bi
from .terms import (Compound, Num, Subst, Term, Var, apply_subst, is_ground,
                    partial_eval, vars_of, vars_of_all)
from .syntax import is_builtin_constraint, term_text


@dataclass(frozen=True)
class IdConstraint:
    id: int
    term: Term


@dataclass(frozen=True)
class Token:
    """Propagation-history entry: a rule applied to specific constraints."""

    rule_id: int
    ids: tuple


@dataclass(frozen=True)
class State:
    user: tuple = ()
    builtin: bi.BuiltinStore = bi.EMPTY_STORE
    history: frozenset = frozenset()
    global_vars: frozenset = frozenset()
    next_id: int = 1
    next_var: int = 1

    @property
    def failed(self) -> bool:
        return not self.builtin.consistent

    def live_ids(self) -> list:
        return [c.id for c in self.user]

    def find(self, cid: int) -> Optional[IdConstraint]:
        for c in self.user:
            if c.id == cid:
                return c
        return None


EMPTY_STATE = State()


def view(state: State, t: Term) -> Term:
    """A stored term as currently observable: bindings applied, ground
    arithmetic evaluated."""
    return partial_eval(apply_subst(state.builtin.bindings, t))


def state_vars(state: State) -> set:
    vs = set(state.global_vars)
    for c in state.user:
        vs.update(vars_of(c.term))
    for v, t in state.builtin.bindings.items():
        vs.add(v)
        vs.update(vars_of(t))
    return vs


def _bump_var_counter(state: State, terms: Iterable[Term]) -> State:
    hi = state.next_var
    for t in terms:
        for v in vars_of(t):
            if v.index >= hi:
                hi = v.index + 1
    if hi != state.next_var:
        state = replace(state, next_var=hi)
    return state


def add_constraints(state: State, goal: Iterable[Term]) -> State:
    """Extend a state with additional goal constraints: user constraints get
    fresh ids, built-ins are told in order, goal variables become global."""
    goal = tuple(goal)
    state = replace(state,
                    global_vars=state.global_vars | set(vars_of_all(goal)))
    state = _bump_var_counter(state, goal)
    user = list(state.user)
    store = state.builtin
    next_id = state.next_id
    for item in goal:
        if not isinstance(item, Compound):
            raise ValueError(f"goal item {item!r} is not a constraint")
        if is_builtin_constraint(item):
            store = bi.tell(store, item)
            if not store.consistent:
                break
        else:
            user.append(IdConstraint(next_id, item))
            next_id += 1
    return replace(state, user=tuple(user), builtin=store, next_id=next_id)


def initial_state(goal: Iterable[Term]) -> State:
    return add_constraints(EMPTY_STATE, goal)


# ---------------------------------------------------------------------------
# State equivalence

_FAILED = "failed"


def _canonical(state: State):
    """Id-tagged canonical content: ``(pairs, equations, globals)`` where
    pairs are (id, term) under the bindings.

    Globals that are bound together are rewritten to the least member of
    their class, locals directly equated to a global are eliminated.
    Remaining local variables are the ones subject to renaming during
    comparison.
    """
    bindings = state.builtin.bindings
    pairs = [(c.id, view(state, c.term)) for c in state.user]
    glob = sorted(state.global_vars, key=lambda v: (v.name, v.index))

    classes: dict = {}
    for g in glob:
        val = partial_eval(apply_subst(bindings, g))
        classes.setdefault(val, []).append(g)

    kappa: Subst = {}
    equations: dict = {}
    for val, members in classes.items():
        rep = members[0]  # members are in sorted order
        for g in members[1:]:
            equations[g] = rep
        if isinstance(val, Var):
            if val != rep:
                kappa[val] = rep
        else:
            equations[rep] = val

    if kappa:
        pairs = [(i, apply_subst(kappa, t)) for i, t in pairs]
        equations = {g: apply_subst(kappa, t) for g, t in equations.items()}
    pairs.sort(key=lambda it: (_skeleton_key(it[1]), term_text(it[1]), it[0]))
    return (pairs, equations, frozenset(state.global_vars))


def canonical_content(state: State):
    """Canonical content without constraint identities: the user multiset
    under the bindings plus the bindings projected onto the globals."""
    if state.failed:
        return _FAILED
    pairs, equations, glob = _canonical(state)
    return ([t for _, t in pairs], equations, glob)


def _skeleton(t: Term):
    if isinstance(t, Var):
        return "_"
    if isinstance(t, Num):
        return t.value
    return (t.functor, tuple(_skeleton(a) for a in t.args))


@lru_cache(maxsize=65536)
def _skeleton_key(t: Term) -> str:
    return str(_skeleton(t))


def content_key(content):
    """A cheap renaming-invariant bucket key for visited-set lookups."""
    if content == _FAILED:
        return _FAILED
    user, equations, _ = content
    return (tuple(sorted(map(_skeleton_key, user))),
            tuple(sorted((repr(g), _skeleton_key(t)) for g, t in equations.items())))


def _match_mod_renaming(t1: Term, t2: Term, glob: frozenset, rho: dict, inv: dict):
    """Match t2 (from the second state) against t1 extending the local-variable
    bijection rho.  Returns updated (rho, inv) or None."""
    stack = [(t1, t2)]
    rho = dict(rho)
    inv = dict(inv)
    while stack:
        a, b = stack.pop()
        if isinstance(b, Var):
            if b in glob:
                if a != b:
                    return None
                continue
            if not isinstance(a, Var) or a in glob:
                return None
            if b in rho:
                if rho[b] != a:
                    return None
            elif a in inv:
                return None
            else:
                rho[b] = a
                inv[a] = b
            continue
        if isinstance(b, Num):
            if a != b:
                return None
            continue
        if not (isinstance(a, Compound) and a.functor == b.functor
                and len(a.args) == len(b.args)):
            return None
        stack.extend(zip(a.args, b.args))
    return rho, inv


def _multiset_match(items1, items2, glob, rho, inv) -> bool:
    if not items2:
        return True
    (t2, rest2) = items2[0], items2[1:]
    seen = set()
    for i, t1 in enumerate(items1):
        marker = str(t1)
        if marker in seen:
            continue
        seen.add(marker)
        res = _match_mod_renaming(t1, t2, glob, rho, inv)
        if res is None:
            continue
        if _multiset_match(items1[:i] + items1[i + 1:], rest2, glob, *res):
            return True
    return False


def content_equiv(c1, c2) -> bool:
    """Equivalence on precomputed canonical contents."""
    if c1 == _FAILED or c2 == _FAILED:
        return c1 == c2
    if c1 == c2:
        return True
    u1, e1, g1 = c1
    u2, e2, g2 = c2
    if g1 != g2 or len(u1) != len(u2) or set(e1) != set(e2):
        return False
    glob = g1
    rho: dict = {}
    inv: dict = {}
    for g in sorted(e1, key=lambda v: (v.name, v.index)):
        res = _match_mod_renaming(e1[g], e2[g], glob, rho, inv)
        if res is None:
            return False
        rho, inv = res
    if [_skeleton_key(t) for t in u1] != [_skeleton_key(t) for t in u2]:
        return False
    return _multiset_match(tuple(u1), tuple(u2), glob, rho, inv)


def state_equiv(s1: State, s2: State) -> bool:
    """True when the two states are the same constraint content: equal user
    multisets and equal projected built-ins, up to a renaming of non-global
    variables (identity on globals).  All failed states are equivalent."""
    return content_equiv(canonical_content(s1), canonical_content(s2))


# ---------------------------------------------------------------------------
# Operational interchangeability (equivalence plus history correspondence)

def live_tokens(state: State) -> frozenset:
    """History entries whose constraints are all still alive; tokens that
    mention a removed id can never block anything again."""
    live = {c.id for c in state.user}
    return frozenset(t for t in state.history
                     if all(i in live for i in t.ids))


def _id_colors(pairs, tokens) -> dict:
    """Refine constraint ids by term shape plus token participation; a
    history-respecting bijection can only map ids of equal color."""
    color = {i: [_skeleton_key(t)] for i, t in pairs}
    for tok in sorted(tokens, key=lambda t: (t.rule_id, t.ids)):
        for pos, i in enumerate(tok.ids):
            if i in color:
                color[i].append((tok.rule_id, pos, len(tok.ids)))
    return {i: (parts[0], tuple(sorted(map(str, parts[1:]))))
            for i, parts in color.items()}


def _multiset_match_ids(pairs1, pairs2, colors1, colors2, glob,
                        rho, inv, idmap, accept) -> bool:
    if not pairs2:
        return accept(idmap)
    (id2, t2), rest2 = pairs2[0], pairs2[1:]
    for i, (id1, t1) in enumerate(pairs1):
        if colors1[id1] != colors2[id2]:
            continue
        res = _match_mod_renaming(t1, t2, glob, rho, inv)
        if res is None:
            continue
        if _multiset_match_ids(pairs1[:i] + pairs1[i + 1:], rest2,
                               colors1, colors2, glob,
                               res[0], res[1], {**idmap, id2: id1}, accept):
            return True
    return False


def interchangeable(s1: State, s2: State,
                    canon1=None, canon2=None) -> bool:
    """Equivalent AND carrying corresponding propagation histories under
    some content-preserving id bijection: such states have identical
    futures, so visited-set deduplication may merge them."""
    if s1.failed or s2.failed:
        return s1.failed == s2.failed
    p1, e1, g1 = canon1 if canon1 is not None else _canonical(s1)
    p2, e2, g2 = canon2 if canon2 is not None else _canonical(s2)
    if g1 != g2 or len(p1) != len(p2) or set(e1) != set(e2):
        return False
    tok1 = live_tokens(s1)
    tok2 = live_tokens(s2)
    if len(tok1) != len(tok2):
        return False
    rho: dict = {}
    inv: dict = {}
    for g in sorted(e1, key=lambda v: (v.name, v.index)):
        res = _match_mod_renaming(e1[g], e2[g], glob=g1, rho=rho, inv=inv)
        if res is None:
            return False
        rho, inv = res
    if [_skeleton_key(t) for _, t in p1] != [_skeleton_key(t) for _, t in p2]:
        return False
    if not tok1 and not tok2:
        return _multiset_match(tuple(t for _, t in p1),
                               tuple(t for _, t in p2), g1, rho, inv)
    colors1 = _id_colors(p1, tok1)
    colors2 = _id_colors(p2, tok2)
    if sorted(colors1.values()) != sorted(colors2.values()):
        return False

    def accept(idmap) -> bool:
        mapped = frozenset(Token(t.rule_id, tuple(idmap[i] for i in t.ids))
                           for t in tok2)
        return mapped == tok1

    return _multiset_match_ids(tuple(p1), tuple(p2), colors1, colors2,
                               g1, rho, inv, {}, accept)


# ---------------------------------------------------------------------------
# Canonical printing (the golden-trace format)

def sorted_user(state: State) -> list:
    return sorted(state.user,
                  key=lambda c: (c.term.functor, len(c.term.args), c.id))


def format_state(state: State, show_ids: bool = False) -> str:
    """Built-in bindings restricted to the global variables (`Var = Term`
    lines, sorted), then user constraints sorted by (symbol, arity, id)."""
    if state.failed:
        return "false"
    lines = []
    for g in sorted(state.global_vars, key=lambda v: (v.name, v.index)):
        val = view(state, g)
        if val != g:
            lines.append(f"{g!r} = {term_text(val)}")
    for c in sorted_user(state):
        t = term_text(view(state, c.term))
        lines.append(f"{t}#{c.id}" if show_ids else t)
    if not lines:
        return "<empty>"
    return "\n".join(lines)
