"""Rule-instance enumeration and application, plus three executors:

* ``run_abstract`` with a seeded-random strategy (one normal form) or an
  exhaustive strategy (the set of reachable normal forms up to state
  equivalence — the brute-force oracle used by the analyses),
* ``run_refined``, the deterministic discipline of practical systems:
  goal-order activation, textual rule order, depth-first body activation,
  reactivation on binding,
* ``interrupt_resume``, which stops after a step budget and resumes.
"""
from __future__ import annotations

import functools
import itertools
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from . import builtins as bi
from .state import (IdConstraint, State, Token, add_constraints,
                    canonical_content, content_equiv, content_key,
                    initial_state, interchangeable, live_tokens, state_equiv,
                    state_vars, view, _canonical)
from .syntax import Program, Rule, is_builtin_constraint, term_text
from .terms import (Compound, Subst, Term, Var, apply_subst, is_ground,
                    match, partial_eval, vars_of, vars_of_all,
                    EvalError, DivisionByZero)

DEFAULT_STEP_LIMIT = 100000


class StepLimitExceeded(Exception):
    """The step budget ran out.  Carries the intermediate state, which is a
    legitimate approximation of the result."""

    def __init__(self, state: State, steps: int, trace: "Trace" = None):
        super().__init__(f"step limit reached after {steps} steps")
        self.state = state
        self.steps = steps
        self.trace = trace


class BodyEvaluationError(Exception):
    """Arithmetic failure while building a rule body; aborts the run."""

    def __init__(self, message, rule_label):
        super().__init__(f"{message} (in rule {rule_label})")
        self.rule_label = rule_label


@dataclass(frozen=True)
class RuleInstance:
    rule: Rule
    rule_index: int
    kept_ids: tuple
    removed_ids: tuple
    matching: dict

    @property
    def all_ids(self) -> tuple:
        return self.kept_ids + self.removed_ids


def instance_key(inst: RuleInstance, state: State):
    """Identity of an instance for set comparisons: rule, matched ids, and
    the matching normalized by the state's bindings."""
    binding = tuple(sorted(
        ((v.name, v.index), term_text(view(state, t)))
        for v, t in inst.matching.items()))
    return (inst.rule_index, inst.kept_ids, inst.removed_ids, binding)


@dataclass(frozen=True)
class TraceStep:
    index: int
    rule_label: str
    removed_ids: tuple
    added: tuple          # (id, term) pairs
    tells: tuple

    def line(self) -> str:
        ids = ",".join(map(str, self.removed_ids))
        added = ",".join(term_text(t) for _, t in self.added)
        tells = ",".join(term_text(t) for t in self.tells)
        return f"STEP {self.index}: {self.rule_label} removed=[{ids}] added=[{added}] tells=[{tells}]"


@dataclass
class Trace:
    steps: list = field(default_factory=list)

    @property
    def derivation_length(self) -> int:
        return len(self.steps)

    def record(self, rule_label, removed_ids, added, tells):
        self.steps.append(TraceStep(len(self.steps) + 1, rule_label,
                                    tuple(removed_ids), tuple(added), tuple(tells)))

    def lines(self) -> list:
        return [s.line() for s in self.steps]


@dataclass(frozen=True)
class RunResult:
    state: State
    steps: int
    trace: Trace


# ---------------------------------------------------------------------------
# Instance enumeration

def _negative_indexer():
    return itertools.count(-1, -1)


@functools.lru_cache(maxsize=4096)
def _rename_rule_patterns(rule: Rule):
    """Copy the rule's head/guard patterns with negative variable indexes so
    they can never collide with state variables."""
    from .terms import rename_fresh
    terms, mapping = rename_fresh(rule.heads + rule.guard, _negative_indexer())
    nheads = len(rule.heads)
    inverse = {nv: v for v, nv in mapping.items()}
    return terms[:nheads], terms[nheads:], inverse


def _buckets(state: State) -> dict:
    out: dict = {}
    for c in state.user:
        key = (c.term.functor, len(c.term.args))
        out.setdefault(key, []).append(c)
    return out


def instances_for_rule(state: State, program: Program, rule_index: int,
                       fixed: Optional[tuple] = None) -> list:
    """All instances of one rule in a state.  With ``fixed=(pos, cid)`` the
    head position `pos` is pinned to constraint `cid` (refined executor).

    A store constraint may not be matched by two head positions of one
    instance; guards must be entailed; propagation instances already in the
    history are skipped.
    """
    rule = program.rules[rule_index]
    heads, guard, inverse = _rename_rule_patterns(rule)
    buckets = _buckets(state)
    views = {c.id: view(state, c.term) for c in state.user}
    out = []

    def emit(sigma: Subst, ids: list):
        for g in guard:
            try:
                if not bi.ask(state.builtin, apply_subst(sigma, g)):
                    return
            except EvalError as e:
                raise bi.GuardEvaluationError(
                    f"guard evaluation failed: {e}", rule.label(), tuple(ids)) from e
        nkept = len(rule.kept)
        kept_ids = tuple(ids[:nkept])
        removed_ids = tuple(ids[nkept:])
        if not removed_ids:
            if Token(rule_index, tuple(ids)) in state.history:
                return
        matching = {inverse[v]: t for v, t in sigma.items() if v in inverse}
        out.append(RuleInstance(rule, rule_index, kept_ids, removed_ids, matching))

    def search(pos: int, sigma: Subst, ids: list):
        if pos == len(heads):
            emit(sigma, ids)
            return
        pat = heads[pos]
        if fixed is not None and fixed[0] == pos:
            candidates = [c for c in state.user if c.id == fixed[1]]
        else:
            candidates = buckets.get((pat.functor, len(pat.args)), [])
        for c in candidates:
            if c.id in ids:
                continue
            if fixed is not None and fixed[0] != pos and c.id == fixed[1]:
                continue
            sigma2 = match(pat, views[c.id], sigma)
            if sigma2 is None:
                continue
            ids.append(c.id)
            search(pos + 1, sigma2, ids)
            ids.pop()

    search(0, {}, [])
    return out


def applicable_instances(state: State, program: Program) -> list:
    """All rule instances applicable in a state, in deterministic order
    (rule order, then store order)."""
    if state.failed:
        return []
    out = []
    for i in range(len(program.rules)):
        out.extend(instances_for_rule(state, program, i))
    return out


# ---------------------------------------------------------------------------
# Instance application

def _fresh_body_subst(rule: Rule, matching: Subst, next_var: int):
    """Fresh variables for body variables not bound by the head matching."""
    theta = {}
    bound = set(matching)
    for v in vars_of_all(rule.body):
        if v not in bound and v not in theta:
            theta[v] = Var(v.name, next_var)
            next_var += 1
    return theta, next_var


@dataclass(frozen=True)
class FireInfo:
    added: tuple       # (id, term as stored)
    tells: tuple
    bound_vars: frozenset


def _changed_vars(old: dict, new: dict) -> frozenset:
    changed = set()
    for v, t in new.items():
        if old.get(v, v) != t:
            changed.add(v)
    return frozenset(changed)


def apply_instance(state: State, inst: RuleInstance) -> tuple:
    """Apply one instance: delete the removed constraints, record the
    history token, then tell guard and body left-to-right, adding user
    constraints with fresh ids and ground arithmetic arguments evaluated.

    Returns (new_state, FireInfo).
    """
    rule = inst.rule
    removed = set(inst.removed_ids)
    user = [c for c in state.user if c.id not in removed]
    history = state.history | {Token(inst.rule_index, inst.all_ids)}
    theta, next_var = _fresh_body_subst(rule, inst.matching, state.next_var)
    sigma = dict(inst.matching)
    sigma.update(theta)

    store = state.builtin
    old_bindings = store.bindings
    tells = []
    added = []
    next_id = state.next_id
    for g in rule.guard:
        gt = apply_subst(sigma, g)
        if is_ground(apply_subst(store.bindings, gt)):
            store = bi.tell(store, gt)  # entailed: a consistency no-op
            if not store.consistent:
                break
    if store.consistent:
        for b in rule.body:
            t = apply_subst(sigma, b)
            if is_builtin_constraint(t):
                try:
                    store = bi.tell(store, t)
                except EvalError as e:
                    raise BodyEvaluationError(str(e), rule.label()) from e
                tells.append(t)
                if not store.consistent:
                    break
            else:
                try:
                    t2 = partial_eval(apply_subst(store.bindings, t))
                except EvalError as e:
                    raise BodyEvaluationError(str(e), rule.label()) from e
                user.append(IdConstraint(next_id, t2))
                added.append((next_id, t2))
                next_id += 1

    new_state = State(tuple(user), store, history, state.global_vars,
                      next_id, next_var)
    from .state import _bump_var_counter
    new_state = _bump_var_counter(new_state, [t for _, t in added])
    info = FireInfo(tuple(added), tuple(tells),
                    _changed_vars(old_bindings, store.bindings))
    return new_state, info


# ---------------------------------------------------------------------------
# Abstract executor

def run_abstract(goal_or_state, program: Program, strategy: str = "seeded",
                 step_limit: int = DEFAULT_STEP_LIMIT, seed: int = 0):
    """Iterate transitions until no rule applies.

    strategy="seeded": follow one seeded-random path; returns RunResult.
    strategy="exhaustive": breadth-first over all transition choices with
    state-equivalence deduplication; returns ExhaustiveResult.
    """
    state = goal_or_state if isinstance(goal_or_state, State) \
        else initial_state(goal_or_state)
    if strategy == "exhaustive":
        return exhaustive_normal_forms(state, program, step_limit)
    if strategy != "seeded":
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = random.Random(seed)
    state, steps, trace, limited = _run_seeded(state, program, rng, step_limit)
    if limited:
        raise StepLimitExceeded(state, steps, trace)
    return RunResult(state, steps, trace)


def _run_seeded(state: State, program: Program, rng, max_steps: int):
    trace = Trace()
    steps = 0
    while True:
        if state.failed:
            return state, steps, trace, False
        insts = applicable_instances(state, program)
        if not insts:
            return state, steps, trace, False
        if steps >= max_steps:
            return state, steps, trace, True
        inst = rng.choice(insts)
        state, info = apply_instance(state, inst)
        steps += 1
        trace.record(inst.rule.label(), inst.removed_ids, info.added, info.tells)


@dataclass(frozen=True)
class ErrorForm:
    """Pseudo normal form for a branch that aborted with a runtime error."""

    kind: str


@dataclass(frozen=True)
class ExhaustiveResult:
    normal_forms: tuple   # State or ErrorForm entries, deduplicated
    complete: bool        # False when the exploration bound was hit

    def single(self) -> Optional[State]:
        if self.complete and len(self.normal_forms) == 1 \
                and isinstance(self.normal_forms[0], State):
            return self.normal_forms[0]
        return None


def _nf_content(form):
    return canonical_content(form) if isinstance(form, State) else form


def _nf_equiv(a, b) -> bool:
    if isinstance(a, ErrorForm) or isinstance(b, ErrorForm):
        return a == b
    return state_equiv(a, b)


def _nf_content_equiv(a, ca, b, cb) -> bool:
    if isinstance(a, ErrorForm) or isinstance(b, ErrorForm):
        return a == b
    return content_equiv(ca, cb)


class Explorer:
    """Incremental breadth-first exploration of the transition graph with
    state-equivalence deduplication.  Each ``step()`` expands one frontier
    state and reports freshly found normal forms and the number of instance
    applications it spent."""

    def __init__(self, start, program: Program):
        self.program = program
        self.queue: deque = deque()
        self.visited: dict = {}
        self.forms: list = []          # (form, content) pairs
        self.done = False
        if isinstance(start, ErrorForm):
            self.forms.append((start, start))
            self.done = True
        else:
            self._enqueue(start)

    def _enqueue(self, s: State) -> None:
        # Deduplicate by interchangeability, not bare equivalence: two
        # equivalent states with different propagation histories do not have
        # the same futures and must both be explored.
        canon = None if s.failed else _canonical(s)
        content = canonical_content(s)
        key = (content_key(content), len(live_tokens(s)))
        bucket = self.visited.setdefault(key, [])
        for other, ocanon in bucket:
            if interchangeable(s, other, canon, ocanon):
                return
        bucket.append((s, canon))
        self.queue.append(s)

    def _add_form(self, form) -> list:
        content = _nf_content(form)
        for other, oc in self.forms:
            if _nf_content_equiv(form, content, other, oc):
                return []
        self.forms.append((form, content))
        return [(form, content)]

    def normal_forms(self) -> tuple:
        return tuple(f for f, _ in self.forms)

    def step(self) -> tuple:
        """Expand one state; returns (new_forms, expansions_spent)."""
        if not self.queue:
            self.done = True
            return [], 0
        s = self.queue.popleft()
        new: list = []
        spent = 0
        if s.failed:
            new = self._add_form(s)
        else:
            try:
                insts = applicable_instances(s, self.program)
            except bi.GuardEvaluationError:
                insts = None
                new = self._add_form(ErrorForm("guard-evaluation-error"))
            if insts is not None and not insts:
                new = self._add_form(s)
            elif insts:
                for inst in insts:
                    spent += 1
                    try:
                        t, _ = apply_instance(s, inst)
                    except BodyEvaluationError:
                        new.extend(self._add_form(ErrorForm("body-evaluation-error")))
                        continue
                    self._enqueue(t)
        if not self.queue:
            self.done = True
        return new, spent


def exhaustive_normal_forms(state: State, program: Program,
                            bound: int = 1000) -> ExhaustiveResult:
    """All reachable normal forms up to state equivalence, by bounded
    breadth-first search over the transition graph."""
    ex = Explorer(state, program)
    spent = 0
    while not ex.done:
        _, used = ex.step()
        spent += used
        if spent > bound:
            return ExhaustiveResult(ex.normal_forms(), False)
    return ExhaustiveResult(ex.normal_forms(), True)


def common_form_search(start1, program1: Program, start2, program2: Program,
                       bound: int = 1000) -> tuple:
    """Search both transition graphs for a pair of equivalent normal forms.

    Returns (status, forms1, forms2) with status "joinable" as soon as a
    common form is found, "not_joinable" when both explorations completed
    without one, and "unknown" when the shared expansion budget ran out.
    """
    e1 = Explorer(start1, program1)
    e2 = Explorer(start2, program2)
    spent = 0
    # seed forms from error-only starts are present before any step
    for form, content in e1.forms:
        for oform, ocontent in e2.forms:
            if _nf_content_equiv(form, content, oform, ocontent):
                return "joinable", e1.normal_forms(), e2.normal_forms()
    while True:
        for mine, other in ((e1, e2), (e2, e1)):
            if mine.done:
                continue
            new, used = mine.step()
            spent += used
            for form, content in new:
                for oform, ocontent in other.forms:
                    if _nf_content_equiv(form, content, oform, ocontent):
                        return "joinable", e1.normal_forms(), e2.normal_forms()
        if e1.done and e2.done:
            return "not_joinable", e1.normal_forms(), e2.normal_forms()
        if spent > bound:
            return "unknown", e1.normal_forms(), e2.normal_forms()


# ---------------------------------------------------------------------------
# Refined executor

def _occurrence_table(program: Program) -> dict:
    """(functor, arity) -> [(rule_index, head_position)] in textual order."""
    table: dict = {}
    for ri, rule in enumerate(program.rules):
        for pos, h in enumerate(rule.heads):
            table.setdefault((h.functor, len(h.args)), []).append((ri, pos))
    return table


def run_refined(goal, program: Program, step_limit: int = DEFAULT_STEP_LIMIT,
                trace: Optional[Trace] = None) -> tuple:
    """Deterministic execution: constraints are activated in goal order; an
    active constraint tries its head occurrences in textual program order;
    fired bodies are activated depth-first; stored constraints reactivate
    when one of their variables is bound.

    Returns (state, trace); raises StepLimitExceeded with the intermediate
    state when the budget runs out.
    """
    state = initial_state(goal)
    return resume_refined(state, program, step_limit, trace)


def resume_refined(state: State, program: Program,
                   step_limit: int = DEFAULT_STEP_LIMIT,
                   trace: Optional[Trace] = None,
                   steps_used: int = 0) -> tuple:
    occs = _occurrence_table(program)
    trace = trace if trace is not None else Trace()
    # agenda frames: (constraint id, occurrence index); LIFO for depth-first
    agenda = [(c.id, 0) for c in reversed(state.user)]
    steps = steps_used

    def live(cid: int) -> bool:
        return state.find(cid) is not None

    while agenda:
        if state.failed:
            return state, trace
        cid, occ_i = agenda.pop()
        c = state.find(cid)
        if c is None:
            continue
        key = (c.term.functor, len(c.term.args))
        occ_list = occs.get(key, [])
        if occ_i >= len(occ_list):
            continue
        ri, pos = occ_list[occ_i]
        insts = instances_for_rule(state, program, ri, fixed=(pos, cid))
        if not insts:
            agenda.append((cid, occ_i + 1))
            continue
        inst = insts[0]
        if steps >= step_limit:
            raise StepLimitExceeded(state, steps, trace)
        state, info = apply_instance(state, inst)
        steps += 1
        trace.record(inst.rule.label(), inst.removed_ids, info.added, info.tells)
        if state.failed:
            return state, trace
        # resume this constraint at the same occurrence unless it was removed
        if cid not in inst.removed_ids:
            agenda.append((cid, occ_i))
        # wake stored constraints whose variables got bound
        if info.bound_vars:
            woken = [c2.id for c2 in state.user
                     if c2.id not in {i for i, _ in info.added}
                     and info.bound_vars & set(vars_of(c2.term))]
            for wid in reversed(sorted(woken)):
                agenda.append((wid, 0))
        # activate body constraints depth-first in body order
        for aid, _ in reversed(info.added):
            agenda.append((aid, 0))
    return state, trace


# ---------------------------------------------------------------------------
# Interrupt / resume

def interrupt_resume(goal, program: Program, budget: int, seed: int = 0,
                     step_limit: int = DEFAULT_STEP_LIMIT) -> tuple:
    """Run `budget` steps, observe the intermediate state, then resume from
    exactly that state to completion.  Returns (intermediate, final)."""
    rng = random.Random(seed)
    state = initial_state(goal)
    mid, steps, _, _ = _run_seeded(state, program, rng, budget)
    final, steps2, _, limited = _run_seeded(mid, program, rng, step_limit)
    if limited:
        raise StepLimitExceeded(final, steps + steps2)
    return mid, final
