"""Parallel execution: simultaneous application of non-conflicting rule
instances, simulated deterministically so results are reproducible.

Two instances conflict when they try to remove the same constraint, or when
one removes a constraint the other needs as a kept head (the kept context
must survive the whole round).  Under that condition every selected round
can be replayed as a sequence of ordinary transitions, in any order.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from . import builtins as bi
from .engine import (FireInfo, RuleInstance, Trace, applicable_instances,
                     apply_instance, instance_key, StepLimitExceeded,
                     DEFAULT_STEP_LIMIT)
from .state import IdConstraint, State, Token, initial_state, state_equiv
from .syntax import Program, is_builtin_constraint
from .terms import apply_subst, is_ground, partial_eval, vars_of_all, EvalError


@dataclass(frozen=True)
class ParallelStep:
    instances: tuple


def conflict_free(instances) -> bool:
    removed: set = set()
    kept: set = set()
    for inst in instances:
        r = set(inst.removed_ids)
        k = set(inst.kept_ids)
        if r & removed or r & kept or k & removed:
            return False
        removed |= r
        kept |= k
    return True


def select_parallel(state: State, program: Program, width: int,
                    rng: random.Random) -> ParallelStep:
    """Greedy seeded selection of up to `width` pairwise conflict-free
    instances.  Empty at a normal form."""
    insts = applicable_instances(state, program)
    order = list(insts)
    rng.shuffle(order)
    chosen: list = []
    removed: set = set()
    kept: set = set()
    for inst in order:
        if len(chosen) >= width:
            break
        r = set(inst.removed_ids)
        k = set(inst.kept_ids)
        if r & removed or r & kept or k & removed:
            continue
        chosen.append(inst)
        removed |= r
        kept |= k
    return ParallelStep(tuple(chosen))


def apply_parallel_step(state: State, step: ParallelStep) -> State:
    """Simultaneous application: all removals against the pre-state ids,
    then every instance's guard/body tells and additions in selection
    order.  A failing tell fails the whole run."""
    removed = set()
    history = set(state.history)
    for inst in step.instances:
        removed |= set(inst.removed_ids)
        history.add(Token(inst.rule_index, inst.all_ids))
    user = [c for c in state.user if c.id not in removed]
    store = state.builtin
    next_id = state.next_id
    next_var = state.next_var
    from .engine import _fresh_body_subst, BodyEvaluationError
    for inst in step.instances:
        theta, next_var = _fresh_body_subst(inst.rule, inst.matching, next_var)
        sigma = dict(inst.matching)
        sigma.update(theta)
        for g in inst.rule.guard:
            gt = apply_subst(sigma, g)
            if is_ground(apply_subst(store.bindings, gt)):
                store = bi.tell(store, gt)
        for b in inst.rule.body:
            if not store.consistent:
                break
            t = apply_subst(sigma, b)
            if is_builtin_constraint(t):
                try:
                    store = bi.tell(store, t)
                except EvalError as e:
                    raise BodyEvaluationError(str(e), inst.rule.label()) from e
            else:
                try:
                    t2 = partial_eval(apply_subst(store.bindings, t))
                except EvalError as e:
                    raise BodyEvaluationError(str(e), inst.rule.label()) from e
                user.append(IdConstraint(next_id, t2))
                next_id += 1
        if not store.consistent:
            break
    return State(tuple(user), store, frozenset(history), state.global_vars,
                 next_id, next_var)


@dataclass(frozen=True)
class ParallelResult:
    state: State
    rounds: int
    instances: int


def run_parallel(goal, program: Program, width: int = 1, seed: int = 0,
                 step_limit: int = DEFAULT_STEP_LIMIT) -> ParallelResult:
    """Iterate parallel rounds until no instance applies."""
    state = goal if isinstance(goal, State) else initial_state(goal)
    rng = random.Random(seed)
    rounds = 0
    fired = 0
    while not state.failed:
        step = select_parallel(state, program, width, rng)
        if not step.instances:
            break
        if rounds >= step_limit:
            raise StepLimitExceeded(state, rounds)
        state = apply_parallel_step(state, step)
        rounds += 1
        fired += len(step.instances)
    return ParallelResult(state, rounds, fired)


def serialize_round(state: State, step: ParallelStep,
                    program: Program) -> Optional[State]:
    """Replay a round's instances as sequential transitions, verifying each
    is applicable when its turn comes.  Returns the final state, or None if
    some instance stopped being applicable (the round is then unsound)."""
    current = state
    for inst in step.instances:
        keys = {instance_key(i, current)
                for i in applicable_instances(current, program)}
        if instance_key(inst, current) not in keys:
            return None
        current, _ = apply_instance(current, inst)
    return current
