"""Bundled example programs with goals and verified expected outcomes.

Each fixture names a program file, a goal, how to run it, and what must
come out.  The expected values here are frozen copies of outputs verified
against independent oracles in the test suite (Euclid, trial division,
comparison sort, Floyd-Warshall, chart-parsing enumeration, the Fibonacci
recurrence, Newton iteration).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from ..engine import (BodyEvaluationError, StepLimitExceeded, run_refined,
                      DEFAULT_STEP_LIMIT)
from ..parallel import run_parallel
from ..state import State, format_state, sorted_user, view
from ..syntax import Program, parse_goal, parse_program, term_text


def load_text(filename: str) -> str:
    return (resources.files(__package__) / filename).read_text()


def load_program(filename: str) -> Program:
    return parse_program(load_text(filename))


@dataclass(frozen=True)
class Expect:
    status: str = "normal"          # normal | step_limit | error
    store: Optional[tuple] = None   # exact user store, sorted term texts
    store_contains: tuple = ()
    bindings: dict = field(default_factory=dict)   # var name -> term text
    error_contains: str = ""


@dataclass(frozen=True)
class Fixture:
    name: str
    filename: str
    goal: str
    kind: str                       # corpus | analysis
    expect: Expect
    step_limit: int = DEFAULT_STEP_LIMIT
    parallel_safe: bool = True      # result independent of scheduling
    notes: str = ""


_PRIMES_GOAL = ", ".join(f"prime({n})" for n in range(2, 31))
_PRIMES_STORE = tuple(sorted(f"prime({p})" for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)))

_PATHS_GOAL = ("arc(1,2,3), arc(2,3,4), arc(1,3,10), arc(3,4,1), "
               "arc(2, 4, 6), arc(4, 5, 2)")
_PATHS_STORE = tuple(sorted([
    "arc(1, 2, 3)", "arc(2, 3, 4)", "arc(1, 3, 10)", "arc(3, 4, 1)",
    "arc(2, 4, 6)", "arc(4, 5, 2)",
    "path(1, 2, 3)", "path(2, 3, 4)", "path(1, 3, 7)", "path(3, 4, 1)",
    "path(2, 4, 5)", "path(1, 4, 8)", "path(4, 5, 2)", "path(3, 5, 3)",
    "path(2, 5, 7)", "path(1, 5, 10)",
]))

_CYK_GOAL = ("s->a, t->b, s->s*t, arc(0,1,a), arc(1,2,b), arc(2,3,b), "
             "arc(3, 4, b), arc(4, 5, b)")
_CYK_STORE = tuple(sorted([
    "s->a", "t->b", "s->s*t",
    "arc(0, 1, a)", "arc(1, 2, b)", "arc(2, 3, b)", "arc(3, 4, b)", "arc(4, 5, b)",
    "parse(0, 1, s)", "parse(1, 2, t)", "parse(2, 3, t)", "parse(3, 4, t)",
    "parse(4, 5, t)",
    "parse(0, 2, s)", "parse(0, 3, s)", "parse(0, 4, s)", "parse(0, 5, s)",
]))

_FIB_MEMO_STORE = tuple(sorted([
    "fib(0, 1)", "fib(1, 1)", "fib(2, 2)", "fib(3, 3)", "fib(4, 5)", "fib(5, 8)",
    "fib(6, 13)", "fib(7, 21)", "fib(8, 34)", "fib(9, 55)", "fib(10, 89)",
]))

FIXTURES = (
    Fixture("min", "min.chr", "min(3), min(1), min(2)", "corpus",
            Expect(store=("min(1)",))),
    Fixture("gcd_paper", "gcd_paper.chr", "gcd(8), gcd(8)", "corpus",
            Expect(status="error", error_contains="mod by zero"),
            notes="reaches gcd(0), then mod by zero"),
    Fixture("gcd_repaired", "gcd_repaired.chr", "gcd(12), gcd(27), gcd(30)",
            "corpus", Expect(store=("gcd(3)",)), parallel_safe=False,
            notes="free scheduling may fire the divisor-0 instance"),
    Fixture("primes", "primes.chr", _PRIMES_GOAL, "corpus",
            Expect(store=_PRIMES_STORE)),
    Fixture("array_sort", "array_sort.chr", "a(0, 5), a(1, 2), a(2, 9), a(3, 1)",
            "corpus",
            Expect(store=tuple(sorted(["a(0, 1)", "a(1, 2)", "a(2, 5)", "a(3, 9)"])))),
    Fixture("merge_sort", "merge_sort.chr",
            "next(0, 5), next(0, 2), next(0, 8), next(0, 3)", "corpus",
            Expect(store=tuple(sorted(["next(0, 2)", "next(2, 3)", "next(3, 5)",
                                       "next(5, 8)"])))),
    Fixture("sqrt", "sqrt.chr", "eps(1/1000000), sqrt(2, 2)", "corpus",
            Expect(store=tuple(sorted(["eps(1/1000000)",
                                       "sqrt(2, 665857/470832)"])))),
    Fixture("fib_topdown", "fib_topdown.chr", "fib(10, M)", "corpus",
            Expect(store=(), bindings={"M": "89"})),
    Fixture("fib_memo", "fib_memo.chr", "fib(10, M)", "corpus",
            Expect(store=_FIB_MEMO_STORE, bindings={"M": "89"})),
    Fixture("fib_bottomup", "fib_bottomup.chr", "fibstart", "corpus",
            Expect(status="step_limit", store_contains=("fib(10, 89)",)),
            step_limit=60, notes="no stopping condition; observe mid-run"),
    Fixture("fib_bottomup_max", "fib_bottomup_max.chr", "fibmax(10)", "corpus",
            Expect(store_contains=("fib(10, 89)", "fib(0, 1)", "fib(9, 55)"))),
    Fixture("paths", "paths.chr", _PATHS_GOAL, "corpus",
            Expect(store=_PATHS_STORE)),
    Fixture("cyk", "cyk.chr", _CYK_GOAL, "corpus",
            Expect(store=_CYK_STORE)),
    Fixture("bool_and", "bool_and.chr", "and(X,Y,Z), Z=1", "corpus",
            Expect(store=(), bindings={"X": "1", "Y": "1", "Z": "1"})),
    Fixture("leq", "leq.chr", "leq(A, B), leq(B, C), leq(C, A)", "corpus",
            Expect(store=(), bindings={"A": "B", "C": "B"})),
    Fixture("min_ge", "min_ge.chr", "min(2), min(2), min(7)", "analysis",
            Expect(store=("min(2)",))),
    Fixture("min_hybrid", "min_hybrid.chr", "min(1), min(2)", "analysis",
            Expect(store=("min(1)",)), parallel_safe=False,
            notes="not confluent: result depends on scheduling"),
    Fixture("gcd_positive", "gcd_positive.chr", "gcd(12), gcd(27), gcd(30)",
            "analysis", Expect(store=("gcd(3)",))),
    Fixture("pqr", "pqr.chr", "p", "analysis",
            Expect(store=("q",)), parallel_safe=False,
            notes="not confluent: p rewrites to q or r"),
)


def get(name: str) -> Fixture:
    for f in FIXTURES:
        if f.name == name:
            return f
    raise KeyError(name)


def corpus_fixtures() -> tuple:
    return tuple(f for f in FIXTURES if f.kind == "corpus")


def _store_texts(state: State) -> tuple:
    return tuple(sorted(term_text(view(state, c.term)) for c in state.user))


def _check_state(fx: Fixture, state: State) -> Optional[str]:
    texts = _store_texts(state)
    if fx.expect.store is not None and texts != tuple(sorted(fx.expect.store)):
        return f"store {list(texts)} != expected {sorted(fx.expect.store)}"
    missing = [t for t in fx.expect.store_contains if t not in texts]
    if missing:
        return f"missing from store: {missing}"
    for name, expected in fx.expect.bindings.items():
        actual = None
        for v in state.global_vars:
            if repr(v) == name:
                actual = term_text(view(state, v))
        if actual != expected:
            return f"binding {name} = {actual!r}, expected {expected!r}"
    return None


def run_fixture(fx: Fixture, parallel_width: Optional[int] = None,
                seed: int = 0) -> tuple:
    """Run one fixture and verify it against its frozen expectations.
    Returns (ok, detail)."""
    program = load_program(fx.filename)
    goal = parse_goal(fx.goal)
    try:
        if parallel_width is not None:
            result = run_parallel(goal, program, parallel_width, seed,
                                  step_limit=fx.step_limit)
            state = result.state
        else:
            state, _ = run_refined(goal, program, step_limit=fx.step_limit)
    except StepLimitExceeded as e:
        if fx.expect.status != "step_limit":
            return False, f"unexpected step limit after {e.steps} steps"
        err = _check_state(fx, e.state)
        return (err is None), (err or "step limit reached, state as expected")
    except BodyEvaluationError as e:
        if fx.expect.status != "error":
            return False, f"unexpected runtime error: {e}"
        if fx.expect.error_contains and fx.expect.error_contains not in str(e):
            return False, f"error {e} does not mention {fx.expect.error_contains!r}"
        return True, f"failed as documented: {e}"
    if fx.expect.status != "normal":
        return False, f"expected {fx.expect.status}, got a normal form"
    if state.failed:
        return False, "unexpected failed state"
    err = _check_state(fx, state)
    return (err is None), (err or "ok")
