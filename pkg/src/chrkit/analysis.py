"""Static analyses: minimal states, critical pairs, confluence, completion,
operational equivalence, redundant-rule detection, termination rankings and
the crude derivation-length complexity bound.

Guards that stay symbolic after an overlap are carried as conditions on the
critical state and discharged by satisfiability sampling over a bounded
integer grid; purely linear obligations are settled exactly by
Fourier-Motzkin elimination over the rationals (with integer tightening).
Unknowns are always reported, never dropped.
"""
from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from . import builtins as bi
from .engine import (ErrorForm, ExhaustiveResult, RuleInstance,
                     BodyEvaluationError, apply_instance,
                     common_form_search, exhaustive_normal_forms, _nf_equiv)
from .state import (IdConstraint, State, canonical_content, state_equiv,
                    view)
from .syntax import (Program, Rule, is_builtin_constraint, parse_term,
                     rule_text, term_text)
from .terms import (Compound, Num, Subst, Term, Var, apply_subst,
                    eval_arith, is_ground, partial_eval, rename_apart,
                    unify, vars_of, vars_of_all, EvalError)

DEFAULT_BOUND = 1000
DEFAULT_GRID = 10
DEFAULT_MAX_SAMPLES = 16
_SCAN_CAP = 200000


# ---------------------------------------------------------------------------
# Linear arithmetic: Fourier-Motzkin entailment over integer variables

class NonLinear(Exception):
    pass


@dataclass(frozen=True)
class LinExpr:
    coeffs: tuple   # sorted ((name, index), Fraction) pairs
    const: Fraction

    @staticmethod
    def of(coeffs: dict, const) -> "LinExpr":
        items = tuple(sorted((k, Fraction(v)) for k, v in coeffs.items() if v != 0))
        return LinExpr(items, Fraction(const))

    def as_dict(self) -> dict:
        return dict(self.coeffs)

    def add(self, other: "LinExpr") -> "LinExpr":
        d = self.as_dict()
        for k, v in other.coeffs:
            d[k] = d.get(k, Fraction(0)) + v
        return LinExpr.of(d, self.const + other.const)

    def scale(self, f) -> "LinExpr":
        f = Fraction(f)
        return LinExpr.of({k: v * f for k, v in self.coeffs}, self.const * f)

    def sub(self, other: "LinExpr") -> "LinExpr":
        return self.add(other.scale(-1))


def _var_key(v: Var):
    return (v.name, v.index)


def lin_of_term(t: Term) -> LinExpr:
    """Affine view of a term over its variables; raises NonLinear."""
    if isinstance(t, Num):
        if isinstance(t.value, Fraction) or isinstance(t.value, int):
            return LinExpr.of({}, t.value)
        raise NonLinear(str(t))
    if isinstance(t, Var):
        return LinExpr.of({_var_key(t): Fraction(1)}, 0)
    assert isinstance(t, Compound)
    f, args = t.functor, t.args
    if f == "+" and len(args) == 2:
        return lin_of_term(args[0]).add(lin_of_term(args[1]))
    if f == "-" and len(args) == 2:
        return lin_of_term(args[0]).sub(lin_of_term(args[1]))
    if f == "-" and len(args) == 1:
        return lin_of_term(args[0]).scale(-1)
    if f == "*" and len(args) == 2:
        a, b = lin_of_term(args[0]), lin_of_term(args[1])
        if not a.coeffs:
            return b.scale(a.const)
        if not b.coeffs:
            return a.scale(b.const)
        raise NonLinear(term_text(t))
    if f == "/" and len(args) == 2:
        a, b = lin_of_term(args[0]), lin_of_term(args[1])
        if not b.coeffs and b.const != 0:
            return a.scale(Fraction(1) / b.const)
        raise NonLinear(term_text(t))
    raise NonLinear(term_text(t))


# Inequality: (expr, strict) meaning expr >= 0, or expr > 0 when strict.

def guard_inequalities(conditions) -> Optional[list]:
    """Linear inequalities equivalent to a guard conjunction, or None when
    some conjunct is not affine."""
    out = []
    try:
        for g in conditions:
            f = g.functor
            if f == "true":
                continue
            if f == "=/=":
                return None
            lhs, rhs = (lin_of_term(g.args[0]), lin_of_term(g.args[1]))
            if f in ("=", "=="):
                out.append((lhs.sub(rhs), False))
                out.append((rhs.sub(lhs), False))
            elif f == "<":
                out.append((rhs.sub(lhs), True))
            elif f == "=<":
                out.append((rhs.sub(lhs), False))
            elif f == ">":
                out.append((lhs.sub(rhs), True))
            elif f == ">=":
                out.append((lhs.sub(rhs), False))
            else:
                return None
    except NonLinear:
        return None
    return out


def _integralize(ineq):
    """Clear denominators; turn `e > 0` into `e - 1 >= 0` (sound and complete
    for integer-valued variables)."""
    expr, strict = ineq
    denoms = [v.denominator for _, v in expr.coeffs] + [expr.const.denominator]
    lcm = 1
    for d in denoms:
        lcm = lcm * d // __import__("math").gcd(lcm, d)
    e = expr.scale(lcm)
    if strict:
        e = LinExpr.of(e.as_dict(), e.const - 1)
    return e


def fm_unsat(ineqs) -> bool:
    """True when the conjunction of inequalities has no integer solution
    (sound: rational infeasibility after integer tightening)."""
    work = [_integralize(iq) for iq in ineqs]
    variables = sorted({k for e in work for k, _ in e.coeffs})
    for v in variables:
        lowers, uppers, rest = [], [], []
        for e in work:
            c = e.as_dict().get(v, Fraction(0))
            if c > 0:
                lowers.append(e)
            elif c < 0:
                uppers.append(e)
            else:
                rest.append(e)
        new = rest
        for lo in lowers:
            a = lo.as_dict()[v]
            for up in uppers:
                b = up.as_dict()[v]
                combined = up.scale(a).add(lo.scale(-b))
                new.append(combined)
        work = new
        if len(work) > 4000:   # defensive against blowup; give up (SAT-unknown)
            return False
    return any(e.const < 0 for e in work if not e.coeffs)


def entails_positive(guard_ineqs, claim: LinExpr) -> bool:
    """guard |= claim > 0, decided exactly for integer variables."""
    neg = (claim.scale(-1), False)   # claim <= 0
    return fm_unsat(list(guard_ineqs) + [neg])


def entails_nonneg(guard_ineqs, claim: LinExpr) -> bool:
    neg = (claim.scale(-1), True)    # claim < 0
    return fm_unsat(list(guard_ineqs) + [neg])


# ---------------------------------------------------------------------------
# Guard satisfiability sampling

def _eval_condition(cond: Term, theta: Subst) -> bool:
    try:
        return bi.ask(bi.EMPTY_STORE, apply_subst(theta, cond))
    except EvalError:
        return False


def satisfying_assignments(conditions, grid: int = DEFAULT_GRID,
                           cap: int = DEFAULT_MAX_SAMPLES) -> list:
    """Ground assignments over the conditions' variables that satisfy every
    conjunct, enumerated outward from zero so boundary cases (equalities,
    zeros) come first.  Deterministic; at most `cap` results."""
    variables = vars_of_all(conditions)
    if not variables:
        return [{}] if all(_eval_condition(c, {}) for c in conditions) else []
    ineqs = guard_inequalities(conditions)
    if ineqs is not None and fm_unsat(ineqs):
        return []
    found = []
    scanned = 0
    k = len(variables)
    for radius in range(grid + 1):
        values = range(-radius, radius + 1)
        for combo in itertools.product(values, repeat=k):
            if radius > 0 and max(abs(x) for x in combo) < radius:
                continue
            scanned += 1
            if scanned > _SCAN_CAP:
                return found
            theta = {v: Num(x) for v, x in zip(variables, combo)}
            if all(_eval_condition(c, theta) for c in conditions):
                found.append(theta)
                if len(found) >= cap:
                    return found
    return found


# ---------------------------------------------------------------------------
# Minimal states

@dataclass(frozen=True)
class MinimalState:
    """A rule's head constraints plus its guard as symbolic conditions: the
    smallest state in which the rule has exactly one instance."""

    state: State
    conditions: tuple
    rule_index: int
    rule: Rule


def minimal_state(rule: Rule, rule_index: int = 0) -> MinimalState:
    user = tuple(IdConstraint(i + 1, h) for i, h in enumerate(rule.heads))
    variables = vars_of_all(rule.heads + rule.guard)
    next_var = 1 + max((v.index for v in variables), default=0)
    st = State(user=user, global_vars=frozenset(variables),
               next_id=len(user) + 1, next_var=next_var)
    return MinimalState(st, rule.guard, rule_index, rule)


def rule_instance_on(rule: Rule, rule_index: int, sigma: Subst,
                     kept_ids, removed_ids) -> RuleInstance:
    matching = {v: apply_subst(sigma, v) for v in vars_of_all(rule.heads)}
    return RuleInstance(rule, rule_index, tuple(kept_ids), tuple(removed_ids),
                        matching)


# ---------------------------------------------------------------------------
# Critical pairs

@dataclass(frozen=True)
class CriticalPair:
    rule1_index: int
    rule2_index: int
    overlap_size: int
    critical_state: State
    conditions: tuple
    samples: tuple          # satisfying assignments for the conditions
    inst1: RuleInstance
    inst2: RuleInstance
    left: Optional[State]   # one-step successors (None if building errored)
    right: Optional[State]
    left_error: Optional[str] = None
    right_error: Optional[str] = None

    def label(self, program: Program) -> str:
        return f"{program.rule_label(self.rule1_index)}~{program.rule_label(self.rule2_index)}"


def _positions(rule: Rule):
    out = []
    for i, h in enumerate(rule.kept):
        out.append((i, False, h))
    for i, h in enumerate(rule.removed):
        out.append((len(rule.kept) + i, True, h))
    return out


def critical_pairs(program: Program, grid: int = DEFAULT_GRID,
                   max_samples: int = DEFAULT_MAX_SAMPLES) -> list:
    """All critical pairs of the program: overlap every pair of rules (a rule
    with a renamed copy of itself included) on every unifiable nonempty
    subset of head constraints of which at least one is removed, keep the
    combined guard as conditions, and emit the two one-step successors.

    Overlaps whose conditions are unsatisfiable (decided exactly when
    linear, otherwise by grid sampling) are dropped as infeasible.
    """
    pairs = []
    rules = program.rules
    for i in range(len(rules)):
        for j in range(i, len(rules)):
            r1 = rules[i]
            taboo = set(vars_of_all(r1.heads + r1.guard + r1.body))
            renamed, _ = rename_apart(rules[j].heads + rules[j].guard + rules[j].body,
                                      taboo)
            nh = len(rules[j].heads)
            ng = len(rules[j].guard)
            r2 = Rule(rules[j].name, renamed[:len(rules[j].kept)],
                      renamed[len(rules[j].kept):nh],
                      renamed[nh:nh + ng], renamed[nh + ng:],
                      rules[j].source_index)
            pairs.extend(_overlaps(program, i, j, r1, r2, grid, max_samples))
    return pairs


def _overlaps(program, i, j, r1: Rule, r2: Rule, grid, max_samples) -> list:
    pos1 = _positions(r1)
    pos2 = _positions(r2)
    out = []
    for k in range(1, min(len(pos1), len(pos2)) + 1):
        for subset1 in itertools.combinations(range(len(pos1)), k):
            for perm2 in itertools.permutations(range(len(pos2)), k):
                chosen = list(zip(subset1, perm2))
                if not any(pos1[a][1] or pos2[b][1] for a, b in chosen):
                    continue    # no equated constraint is removed: no conflict
                sigma: Optional[Subst] = {}
                for a, b in chosen:
                    sigma = unify(apply_subst(sigma, pos1[a][2]),
                                  apply_subst(sigma, pos2[b][2]), sigma)
                    if sigma is None:
                        break
                if sigma is None:
                    continue
                cp = _build_pair(program, i, j, r1, r2, chosen, sigma,
                                 grid, max_samples)
                if cp is not None:
                    out.append(cp)
    return out


def _build_pair(program, i, j, r1, r2, chosen, sigma, grid, max_samples):
    pos1 = _positions(r1)
    pos2 = _positions(r2)
    paired2 = {b: a for a, b in chosen}
    user = []
    ids1 = []
    for idx, (_, _, h) in enumerate(pos1):
        user.append(IdConstraint(idx + 1, apply_subst(sigma, h)))
        ids1.append(idx + 1)
    ids2 = [0] * len(pos2)
    next_id = len(pos1) + 1
    for idx, (_, _, h) in enumerate(pos2):
        if idx in paired2:
            ids2[idx] = ids1[paired2[idx]]
        else:
            user.append(IdConstraint(next_id, apply_subst(sigma, h)))
            ids2[idx] = next_id
            next_id += 1

    conditions = []
    for g in r1.guard + r2.guard:
        gt = partial_eval(apply_subst(sigma, g))
        if is_ground(gt):
            try:
                if not bi.ask(bi.EMPTY_STORE, gt):
                    return None     # guard combination is false
            except EvalError:
                return None
        else:
            conditions.append(gt)
    conditions = tuple(conditions)

    samples: tuple = ()
    if conditions:
        found = satisfying_assignments(conditions, grid, max_samples)
        if not found:
            return None             # infeasible overlap
        samples = tuple(found)

    terms = [c.term for c in user] + list(conditions)
    variables = vars_of_all(terms)
    next_var = 1 + max((v.index for v in variables), default=0)
    cs = State(user=tuple(user), global_vars=frozenset(variables),
               next_id=next_id, next_var=next_var)

    nk1 = len(r1.kept)
    inst1 = rule_instance_on(r1, i, sigma, ids1[:nk1], ids1[nk1:])
    nk2 = len(r2.kept)
    inst2 = rule_instance_on(r2, j, sigma, ids2[:nk2], ids2[nk2:])

    left = right = None
    left_error = right_error = None
    try:
        left, _ = apply_instance(cs, inst1)
    except BodyEvaluationError as e:
        left_error = str(e)
    try:
        right, _ = apply_instance(cs, inst2)
    except BodyEvaluationError as e:
        right_error = str(e)
    return CriticalPair(i, j, len(chosen), cs, conditions, samples,
                        inst1, inst2, left, right, left_error, right_error)


# ---------------------------------------------------------------------------
# Joinability and confluence

@dataclass(frozen=True)
class Joinability:
    status: str                 # joinable | not_joinable | unknown
    witness: Optional[tuple] = None   # (theta, left forms, right forms)


def _instantiate_state(state: State, theta: Subst):
    """Ground a state by a sample assignment; arithmetic errors surface as
    an ErrorForm."""
    if not theta:
        return state
    try:
        user = tuple(IdConstraint(c.id, partial_eval(apply_subst(theta, c.term)))
                     for c in state.user)
        bindings = {v: partial_eval(apply_subst(theta, t))
                    for v, t in state.builtin.bindings.items() if v not in theta}
    except EvalError as e:
        return ErrorForm("body-evaluation-error")
    return State(user, bi.BuiltinStore(bindings, True), state.history,
                 state.global_vars, state.next_id, state.next_var)


def _instantiate_instance(inst: RuleInstance, theta: Subst) -> RuleInstance:
    matching = {v: apply_subst(theta, t) for v, t in inst.matching.items()}
    return RuleInstance(inst.rule, inst.rule_index, inst.kept_ids,
                        inst.removed_ids, matching)


def _successor_state(cs, inst):
    """One-step successor of an instantiated critical state."""
    if isinstance(cs, ErrorForm):
        return cs
    try:
        succ, _ = apply_instance(cs, inst)
    except BodyEvaluationError:
        return ErrorForm("body-evaluation-error")
    return succ


def joinable(cp: CriticalPair, program: Program,
             bound: int = DEFAULT_BOUND) -> Joinability:
    """Normalize both successors (per satisfying sample when the overlap
    kept symbolic conditions) searching for a common normal form up to
    state equivalence; not joinable only when both bounded explorations
    completed without finding one."""
    if (cp.left_error is None and cp.right_error is None
            and state_equiv(cp.left, cp.right)):
        return Joinability("joinable")
    variants = cp.samples if cp.conditions else ({},)
    for theta in variants:
        cs = _instantiate_state(cp.critical_state, theta)
        left = _successor_state(cs, _instantiate_instance(cp.inst1, theta))
        right = _successor_state(cs, _instantiate_instance(cp.inst2, theta))
        status, lforms, rforms = common_form_search(left, program, right,
                                                    program, bound)
        if status != "joinable":
            return Joinability(status, (theta, lforms, rforms))
    return Joinability("joinable")


@dataclass(frozen=True)
class ConfluenceReport:
    verdict: str                # confluent | not_confluent | unknown
    pairs: tuple                # (CriticalPair, Joinability)

    def witnesses(self) -> list:
        return [(cp, jb) for cp, jb in self.pairs if jb.status == "not_joinable"]

    def lines(self, program: Program) -> list:
        out = []
        for cp, jb in self.pairs:
            status = {"joinable": "joinable", "not_joinable": "NOT JOINABLE",
                      "unknown": "unknown"}[jb.status]
            out.append(f"CP {cp.label(program)} overlap={cp.overlap_size} → {status}")
        word = {"confluent": "yes", "not_confluent": "no", "unknown": "unknown"}
        out.append(f"CONFLUENT: {word[self.verdict]}")
        return out


def check_confluence(program: Program, bound: int = DEFAULT_BOUND,
                     grid: int = DEFAULT_GRID,
                     max_samples: int = DEFAULT_MAX_SAMPLES) -> ConfluenceReport:
    """Confluence of a terminating program: every critical pair joinable."""
    results = []
    verdict = "confluent"
    for cp in critical_pairs(program, grid, max_samples):
        jb = joinable(cp, program, bound)
        results.append((cp, jb))
        if jb.status == "not_joinable":
            verdict = "not_confluent"
        elif jb.status == "unknown" and verdict == "confluent":
            verdict = "unknown"
    return ConfluenceReport(verdict, tuple(results))


# ---------------------------------------------------------------------------
# Rankings

class InvalidRanking(Exception):
    pass


class NonNumericRank(Exception):
    pass


@dataclass(frozen=True)
class RankingSpec:
    """Per constraint symbol, an affine function of the integer arguments.
    Built-ins rank 0; unlisted user symbols rank 0."""

    ranks: dict

    def affine(self, functor: str, arity: int):
        return self.ranks.get((functor, arity))


_RANK_LINE = re.compile(r"^\s*rank\s+([a-z][A-Za-z0-9_]*)\s*/\s*(\d+)\s*=\s*(.+?)\s*$")


def parse_ranking(text: str) -> RankingSpec:
    """Ranking files: one `rank symbol/arity = expr` per line with $1..$n
    referring to argument positions; % comments allowed."""
    ranks = {}
    for raw in text.splitlines():
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        m = _RANK_LINE.match(line)
        if not m:
            raise InvalidRanking(f"bad ranking line: {raw!r}")
        sym, arity = m.group(1), int(m.group(2))
        expr_src = re.sub(r"\$(\d+)", r"ARGREF\1", m.group(3))
        t = parse_term(expr_src)
        coeffs, const = _affine_of_argrefs(t, arity)
        ranks[(sym, arity)] = (coeffs, const)
    return RankingSpec(ranks)


def _affine_of_argrefs(t: Term, arity: int):
    lin = lin_of_term(t)    # NonLinear propagates as InvalidRanking below
    coeffs = {}
    for (name, index), v in lin.coeffs:
        m = re.fullmatch(r"ARGREF(\d+)", name)
        if not m or index != 0:
            raise InvalidRanking(f"unexpected variable {name} in ranking expression")
        pos = int(m.group(1))
        if not 1 <= pos <= arity:
            raise InvalidRanking(f"argument ${pos} out of range for arity {arity}")
        coeffs[pos] = v
    return coeffs, lin.const


def rank_value(rk: RankingSpec, t: Compound) -> Fraction:
    """Numeric rank of a ground user constraint."""
    spec = rk.affine(t.functor, len(t.args))
    if spec is None:
        return Fraction(0)
    coeffs, const = spec
    total = Fraction(const)
    for pos, c in coeffs.items():
        if c == 0:
            continue
        arg = partial_eval(t.args[pos - 1])
        if not isinstance(arg, Num):
            raise NonNumericRank(f"argument {pos} of {term_text(t)} is not numeric")
        total += c * Fraction(arg.value)
    return total


def rank_state_sum(rk: RankingSpec, state: State) -> Fraction:
    return sum((rank_value(rk, view(state, c.term)) for c in state.user),
               Fraction(0))


class _AuxVars:
    """Fresh variables for mod-relaxations during linearization."""

    def __init__(self):
        self.count = 0
        self.extra: list = []

    def fresh(self) -> Var:
        self.count += 1
        return Var("#mod", self.count)


def _lin_with_mod(t: Term, guard_ineqs, aux: _AuxVars) -> LinExpr:
    """Like lin_of_term but relaxes `a mod b` to a fresh m with
    0 <= m <= b-1 when the guard entails b > 0."""
    if isinstance(t, Compound) and t.functor == "mod" and len(t.args) == 2:
        d = _lin_with_mod(t.args[1], guard_ineqs, aux)
        if not entails_positive(guard_ineqs + aux.extra, d):
            raise NonLinear("mod with divisor of unknown sign")
        m = aux.fresh()
        me = LinExpr.of({_var_key(m): Fraction(1)}, 0)
        aux.extra.append((me, False))                       # m >= 0
        aux.extra.append((d.sub(me).add(LinExpr.of({}, -1)), False))  # d-1-m >= 0
        return me
    if isinstance(t, Compound) and t.args:
        f, args = t.functor, t.args
        if f == "+" and len(args) == 2:
            return _lin_with_mod(args[0], guard_ineqs, aux).add(
                _lin_with_mod(args[1], guard_ineqs, aux))
        if f == "-" and len(args) == 2:
            return _lin_with_mod(args[0], guard_ineqs, aux).sub(
                _lin_with_mod(args[1], guard_ineqs, aux))
        if f == "-" and len(args) == 1:
            return _lin_with_mod(args[0], guard_ineqs, aux).scale(-1)
        if f == "*" and len(args) == 2:
            a = _lin_with_mod(args[0], guard_ineqs, aux)
            b = _lin_with_mod(args[1], guard_ineqs, aux)
            if not a.coeffs:
                return b.scale(a.const)
            if not b.coeffs:
                return a.scale(b.const)
            raise NonLinear(term_text(t))
        if f == "/" and len(args) == 2:
            a = _lin_with_mod(args[0], guard_ineqs, aux)
            b = _lin_with_mod(args[1], guard_ineqs, aux)
            if not b.coeffs and b.const != 0:
                return a.scale(Fraction(1) / b.const)
            raise NonLinear(term_text(t))
    return lin_of_term(t)


def _rank_linexpr(rk: RankingSpec, t: Compound, guard_ineqs, aux: _AuxVars) -> LinExpr:
    spec = rk.affine(t.functor, len(t.args))
    if spec is None:
        return LinExpr.of({}, 0)
    coeffs, const = spec
    e = LinExpr.of({}, const)
    for pos, c in coeffs.items():
        if c == 0:
            continue
        e = e.add(_lin_with_mod(t.args[pos - 1], guard_ineqs, aux).scale(c))
    return e


@dataclass(frozen=True)
class RuleRankingResult:
    rule_label: str
    status: str             # proved | refuted | probabilistic_pass
    detail: str = ""
    witness: Optional[dict] = None


@dataclass(frozen=True)
class RankingReport:
    status: str             # proved | refuted | probabilistic_pass
    rules: tuple

    def witness(self):
        for r in self.rules:
            if r.status == "refuted":
                return r
        return None


def _try_prove_rule(rule: Rule, rk: RankingSpec) -> Optional[bool]:
    """Exact proof that every rule application strictly decreases the
    multiset of constraint ranks: each added constraint ranks strictly below
    some removed head, and every involved rank is nonnegative.  Returns True
    (proved), or None when the obligations are not linear."""
    guard_ineqs = guard_inequalities(rule.guard)
    if guard_ineqs is None:
        return None
    body_user = [b for b in rule.body if not is_builtin_constraint(b)]
    try:
        aux = _AuxVars()
        involved = list(rule.heads) + body_user
        for c in involved:
            e = _rank_linexpr(rk, c, guard_ineqs, aux)
            if not entails_nonneg(guard_ineqs + aux.extra, e):
                return None
        for b in body_user:
            aux_b = _AuxVars()
            be = _rank_linexpr(rk, b, guard_ineqs, aux_b)
            dominated = False
            for r in rule.removed:
                re_ = _rank_linexpr(rk, r, guard_ineqs, aux_b)
                if entails_positive(guard_ineqs + aux_b.extra, re_.sub(be)):
                    dominated = True
                    break
            if not dominated:
                return None
        return True
    except NonLinear:
        return None


def _sample_rule_ranking(rule: Rule, rk: RankingSpec, samples: int,
                         rng: random.Random) -> RuleRankingResult:
    """Randomized check of the strict multiset decrease on guard-satisfying
    ground instances."""
    variables = vars_of_all(rule.heads + rule.guard)
    body_user = [b for b in rule.body if not is_builtin_constraint(b)]
    label = rule.label()
    tried = 0
    satisfied = 0
    attempts_cap = samples * 120
    while satisfied < samples and tried < attempts_cap:
        tried += 1
        theta = {v: Num(rng.randint(-25, 25)) for v in variables}
        if not all(_eval_condition(g, theta) for g in rule.guard):
            continue
        satisfied += 1
        try:
            removed_ranks = [rank_value(rk, partial_eval(apply_subst(theta, r)))
                             for r in rule.removed]
            body_ranks = [rank_value(rk, partial_eval(apply_subst(theta, b)))
                          for b in body_user]
            head_ranks = [rank_value(rk, partial_eval(apply_subst(theta, h)))
                          for h in rule.heads]
        except (NonNumericRank, EvalError):
            continue
        witness = {repr(v): term_text(t) for v, t in theta.items()}
        if any(r < 0 for r in removed_ranks + body_ranks + head_ranks):
            return RuleRankingResult(label, "refuted", "negative rank", witness)
        top = max(removed_ranks) if removed_ranks else None
        for br in body_ranks:
            if top is None or not br < top:
                return RuleRankingResult(label, "refuted",
                                         "no strict decrease", witness)
    return RuleRankingResult(label, "probabilistic_pass",
                             f"{satisfied} satisfying samples")


def verify_ranking(program: Program, rk: RankingSpec, samples: int = 1000,
                   seed: int = 0) -> RankingReport:
    """Check that the ranking strictly decreases across every rule: the
    removed heads must dominate every added user constraint (multiset
    order), with nonnegative ranks throughout.  Linear obligations are
    proved exactly; the rest fall back to guard-satisfying sampling."""
    rng = random.Random(seed)
    results = []
    for rule in program.rules:
        body_user = [b for b in rule.body if not is_builtin_constraint(b)]
        if not rule.removed:
            results.append(RuleRankingResult(
                rule.label(), "refuted",
                "nothing is removed; the rule can only grow the state"))
            continue
        if _try_prove_rule(rule, rk):
            results.append(RuleRankingResult(rule.label(), "proved"))
            continue
        results.append(_sample_rule_ranking(rule, rk, samples, rng))
    if any(r.status == "refuted" for r in results):
        status = "refuted"
    elif all(r.status == "proved" for r in results):
        status = "proved"
    else:
        status = "probabilistic_pass"
    return RankingReport(status, tuple(results))


# ---------------------------------------------------------------------------
# Meta-complexity bound

@dataclass(frozen=True)
class ComplexityReport:
    heads: int
    bound_text: str
    derivation_length: Optional[int] = None
    numeric_bound: Optional[int] = None

    def lines(self) -> list:
        out = [f"h = {self.heads}", f"bound = {self.bound_text}"]
        if self.derivation_length is not None:
            out.append(f"D = {self.derivation_length}")
            out.append(f"D^h = {self.numeric_bound}")
        return out


def complexity_bound(program: Program,
                     derivation_length: Optional[int] = None) -> ComplexityReport:
    """The crude bound O(D^h): derivation length to the power of the maximum
    number of head constraints in a rule."""
    h = max(len(r.heads) for r in program.rules)
    numeric = derivation_length ** h if derivation_length is not None else None
    return ComplexityReport(h, f"O(D^{h})", derivation_length, numeric)


# ---------------------------------------------------------------------------
# Operational equivalence and redundant rules

@dataclass(frozen=True)
class EquivReport:
    verdict: str            # equivalent | not_equivalent | refused | unknown
    reason: str = ""
    witness: Optional[tuple] = None   # (rule_label, theta, forms1, forms2)


def check_operational_equivalence(p1: Program, p2: Program,
                                  bound: int = DEFAULT_BOUND,
                                  grid: int = DEFAULT_GRID,
                                  max_samples: int = DEFAULT_MAX_SAMPLES) -> EquivReport:
    """Decide operational equivalence of two terminating, confluent
    programs: every rule's minimal state must reach equivalent normal forms
    in both.  Refuses non-confluent input."""
    for prog, side in ((p1, "first"), (p2, "second")):
        rep = check_confluence(prog, bound, grid, max_samples)
        if rep.verdict != "confluent":
            return EquivReport("refused",
                               f"{side} program is not confluent ({rep.verdict})")
    for source in (p1, p2):
        for idx, rule in enumerate(source.rules):
            ms = minimal_state(rule, idx)
            if ms.conditions:
                variants = satisfying_assignments(ms.conditions, grid, max_samples)
                if not variants:
                    continue    # guard unsatisfiable: the rule never fires
            else:
                variants = [{}]
            for theta in variants:
                st = _instantiate_state(ms.state, theta)
                status, forms1, forms2 = common_form_search(st, p1, st, p2, bound)
                if status == "unknown":
                    return EquivReport("unknown", "normalization bound hit",
                                       (rule.label(), theta, forms1, forms2))
                if status == "not_joinable":
                    return EquivReport("not_equivalent",
                                       f"minimal state of {rule.label()} distinguishes",
                                       (rule.label(), theta, forms1, forms2))
    return EquivReport("equivalent")


def find_redundant_rules(program: Program, bound: int = DEFAULT_BOUND,
                         grid: int = DEFAULT_GRID,
                         max_samples: int = DEFAULT_MAX_SAMPLES) -> list:
    """Rules whose removal leaves an operationally equivalent program,
    tested one at a time."""
    redundant = []
    for idx in range(len(program.rules)):
        rest = Program(tuple(r for k, r in enumerate(program.rules) if k != idx),
                       program.constraint_symbols)
        if not rest.rules:
            continue
        rep = check_operational_equivalence(program, rest, bound, grid, max_samples)
        if rep.verdict == "equivalent":
            redundant.append(idx)
    return redundant


# ---------------------------------------------------------------------------
# Completion

class UnorientablePair(Exception):
    def __init__(self, n1_text, n2_text):
        super().__init__(f"cannot orient: rank({n1_text}) = rank({n2_text})")


@dataclass(frozen=True)
class CompletionResult:
    status: str             # completed | gave_up
    program: Program
    iterations: int
    added_rules: tuple


def _content_equations(state: State) -> set:
    content = canonical_content(state)
    if content == "failed":
        return set()
    _, equations, _ = content
    return {Compound("=", (g, t)) for g, t in equations.items()}


def _first_nf_state(state: State, program: Program, bound: int):
    res = exhaustive_normal_forms(state, program, bound)
    states = [f for f in res.normal_forms if isinstance(f, State)]
    if not res.complete or not states:
        return None
    states.sort(key=lambda s: str(canonical_content(s)))
    return states[0]


def complete(program: Program, ranking: RankingSpec,
             max_iterations: int = 25, bound: int = DEFAULT_BOUND,
             grid: int = DEFAULT_GRID,
             max_samples: int = DEFAULT_MAX_SAMPLES) -> CompletionResult:
    """Add rules derived from non-joinable critical pairs until the program
    becomes confluent, orienting each new rule by the ranking (higher-ranked
    normal form rewrites to the lower).  May give up: completion need not
    terminate."""
    prog = program
    added: list = []
    for iteration in range(max_iterations + 1):
        report = check_confluence(prog, bound, grid, max_samples)
        if report.verdict == "confluent":
            return CompletionResult("completed", prog, iteration, tuple(added))
        bad = report.witnesses()
        if not bad:
            return CompletionResult("gave_up", prog, iteration, tuple(added))
        if iteration == max_iterations:
            return CompletionResult("gave_up", prog, iteration, tuple(added))
        cp, _ = bad[0]
        n1 = None if cp.left_error else _first_nf_state(cp.left, prog, bound)
        n2 = None if cp.right_error else _first_nf_state(cp.right, prog, bound)
        if n1 is None or n2 is None:
            return CompletionResult("gave_up", prog, iteration, tuple(added))
        try:
            r1 = rank_state_sum(ranking, n1)
            r2 = rank_state_sum(ranking, n2)
        except NonNumericRank:
            return CompletionResult("gave_up", prog, iteration, tuple(added))
        if r1 == r2:
            raise UnorientablePair(
                "; ".join(term_text(view(n1, c.term)) for c in n1.user) or "true",
                "; ".join(term_text(view(n2, c.term)) for c in n2.user) or "true")
        if r1 < r2:
            n1, n2 = n2, n1
        new_rules = _completion_rules(n1, n2, cp.conditions, len(prog.rules))
        if not new_rules:
            return CompletionResult("gave_up", prog, iteration, tuple(added))
        prog = Program(prog.rules + tuple(new_rules), prog.constraint_symbols)
        added.extend(new_rules)
    return CompletionResult("gave_up", prog, max_iterations, tuple(added))


def _completion_rules(n1: State, n2: State, conditions, base_index: int) -> list:
    heads = tuple(view(n1, c.term) for c in n1.user)
    if not heads:
        return []
    body_user = tuple(view(n2, c.term) for c in n2.user)
    eq1 = _content_equations(n1)
    eq2 = _content_equations(n2)
    diff = tuple(sorted(eq2 - eq1, key=term_text))
    rules = [Rule(f"completion_{base_index + 1}", (), heads,
                  tuple(conditions), body_user + diff, base_index)]
    if diff and eq1 <= eq2:
        rules.append(Rule(f"completion_{base_index + 2}", heads, (),
                          tuple(conditions), diff, base_index + 1))
    return rules
