"""Command-line front end.

Commands:
    chr run PROGRAM [GOAL] [--refined|--abstract|--exhaustive]
                    [--parallel W] [--trace] [--seed N] [--steps N]
    chr analyze confluence|complete|equiv|redundant|ranking|complexity ...
    chr corpus list|run-all [--parallel W]

Exit codes for `run`: 0 normal form, 1 failed state, 2 step limit,
3 runtime error, 4 file or parse error.  For `analyze`: 0 positive verdict,
1 negative with witnesses, 2 unknown or bound hit, 4 file or parse error.
Repeated invocations with the same seed produce byte-identical stdout; the
environment variable CHR_SEED overrides --seed.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from . import analysis, corpus
from .builtins import GuardEvaluationError, NonGroundComparison
from .engine import (BodyEvaluationError, StepLimitExceeded, run_abstract,
                     run_refined, DEFAULT_STEP_LIMIT)
from .parallel import run_parallel
from .state import State, canonical_content, format_state
from .syntax import (ChrSyntaxError, parse_goal, parse_program, program_text,
                     rule_text, term_text)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_LIMIT = 2
EXIT_RUNTIME = 3
EXIT_USAGE = 4


@dataclass(frozen=True)
class Config:
    step_limit: int = DEFAULT_STEP_LIMIT
    joinability_bound: int = 1000
    completion_iterations: int = 25
    sample_grid: int = 10
    seed: int = 0
    parallel_width: int = 1


def _read_file(path: str) -> str:
    try:
        with open(path, "r") as fh:
            return fh.read()
    except OSError as e:
        raise ChrSyntaxError(f"cannot read {path}: {e.strerror}")


def _load_program(path: str):
    return parse_program(_read_file(path))


def _effective_seed(args) -> int:
    env = os.environ.get("CHR_SEED")
    if env is not None:
        return int(env)
    return args.seed


def _print_state(state: State, out) -> None:
    out.append(format_state(state))


def cmd_run(args, out) -> int:
    program = _load_program(args.program)
    goal = parse_goal(args.goal if args.goal is not None
                      else _read_file(args.goal_file) if args.goal_file else "")
    seed = _effective_seed(args)
    try:
        if args.parallel is not None:
            result = run_parallel(goal, program, args.parallel, seed,
                                  step_limit=args.steps)
            out.append(f"ROUNDS={result.rounds} INSTANCES={result.instances}")
            _print_state(result.state, out)
            return EXIT_NEGATIVE if result.state.failed else EXIT_OK
        if args.exhaustive:
            res = run_abstract(goal, program, "exhaustive", args.steps, seed)
            forms = sorted(
                (f for f in res.normal_forms),
                key=lambda f: format_state(f) if isinstance(f, State) else str(f))
            out.append(f"NORMAL FORMS: {len(forms)}"
                       + ("" if res.complete else " (exploration bound hit)"))
            for i, f in enumerate(forms, 1):
                out.append(f"--- normal form {i} ---")
                if isinstance(f, State):
                    _print_state(f, out)
                else:
                    out.append(f"runtime error: {f.kind}")
            if not res.complete:
                return EXIT_LIMIT
            return EXIT_OK
        if args.abstract:
            result = run_abstract(goal, program, "seeded", args.steps, seed)
            state, trace = result.state, result.trace
        else:
            state, trace = run_refined(goal, program, step_limit=args.steps)
        if args.trace:
            out.extend(trace.lines())
            out.append(f"DERIVATION LENGTH: {trace.derivation_length}")
        _print_state(state, out)
        return EXIT_NEGATIVE if state.failed else EXIT_OK
    except StepLimitExceeded as e:
        if args.trace and e.trace is not None:
            out.extend(e.trace.lines())
        out.append(f"step limit reached after {e.steps} steps; current state:")
        _print_state(e.state, out)
        return EXIT_LIMIT
    except (BodyEvaluationError, GuardEvaluationError, NonGroundComparison) as e:
        out.append(f"runtime error: {e}")
        return EXIT_RUNTIME


def cmd_analyze(args, out) -> int:
    sub = args.analysis
    seed = _effective_seed(args)
    if sub == "confluence":
        program = _load_program(args.program)
        report = analysis.check_confluence(program, args.bound, args.grid)
        out.append(f"SEED={seed}")
        out.extend(report.lines(program))
        return {"confluent": EXIT_OK, "not_confluent": EXIT_NEGATIVE,
                "unknown": EXIT_LIMIT}[report.verdict]
    if sub == "complete":
        program = _load_program(args.program)
        ranking = analysis.parse_ranking(_read_file(args.ranking))
        try:
            result = analysis.complete(program, ranking, args.max_iterations,
                                       args.bound, args.grid)
        except analysis.UnorientablePair as e:
            out.append(f"UNORIENTABLE: {e}")
            return EXIT_NEGATIVE
        out.append(f"COMPLETION: {result.status} after {result.iterations} iterations")
        for r in result.added_rules:
            out.append(f"added: {rule_text(r)}")
        out.append(program_text(result.program).rstrip("\n"))
        return EXIT_OK if result.status == "completed" else EXIT_LIMIT
    if sub == "equiv":
        p1 = _load_program(args.program)
        p2 = _load_program(args.other)
        report = analysis.check_operational_equivalence(p1, p2, args.bound,
                                                        args.grid)
        out.append(f"EQUIVALENT: {report.verdict}")
        if report.reason:
            out.append(report.reason)
        if report.witness is not None:
            label, theta, forms1, forms2 = report.witness
            out.append(f"witness: minimal state of {label}"
                       + (f" at {_theta_text(theta)}" if theta else ""))
            _append_forms(out, "first", forms1)
            _append_forms(out, "second", forms2)
        return {"equivalent": EXIT_OK, "not_equivalent": EXIT_NEGATIVE,
                "refused": EXIT_LIMIT, "unknown": EXIT_LIMIT}[report.verdict]
    if sub == "redundant":
        program = _load_program(args.program)
        redundant = analysis.find_redundant_rules(program, args.bound, args.grid)
        if redundant:
            for idx in redundant:
                out.append(f"redundant: {rule_text(program.rules[idx])}")
            return EXIT_NEGATIVE
        out.append("no redundant rules")
        return EXIT_OK
    if sub == "ranking":
        program = _load_program(args.program)
        ranking = analysis.parse_ranking(_read_file(args.ranking))
        report = analysis.verify_ranking(program, ranking, args.samples, seed)
        out.append(f"SEED={seed}")
        for r in report.rules:
            detail = f" ({r.detail})" if r.detail else ""
            out.append(f"rule {r.rule_label}: {r.status}{detail}")
        out.append(f"RANKING: {report.status}")
        return {"proved": EXIT_OK, "refuted": EXIT_NEGATIVE,
                "probabilistic_pass": EXIT_LIMIT}[report.status]
    if sub == "complexity":
        program = _load_program(args.program)
        measured = None
        if args.measure is not None:
            goal = parse_goal(args.measure)
            _, trace = run_refined(goal, program, step_limit=args.steps)
            measured = trace.derivation_length
        report = analysis.complexity_bound(program, measured)
        out.extend(report.lines())
        return EXIT_OK
    raise ChrSyntaxError(f"unknown analysis {sub!r}")


def _theta_text(theta) -> str:
    return ", ".join(f"{v!r}={term_text(t)}"
                     for v, t in sorted(theta.items(),
                                        key=lambda it: (it[0].name, it[0].index)))


def _append_forms(out, label, forms) -> None:
    for f in forms:
        if isinstance(f, State):
            text = format_state(f).replace("\n", "; ")
        else:
            text = f"runtime error: {f.kind}"
        out.append(f"  {label}: {text}")


def cmd_corpus(args, out) -> int:
    seed = _effective_seed(args)
    if args.corpus_command == "list":
        for fx in corpus.FIXTURES:
            out.append(f"{fx.name:18} {fx.kind:8} {fx.filename:22} goal: {fx.goal}")
        out.append(f"{len(corpus.corpus_fixtures())} corpus programs, "
                   f"{len(corpus.FIXTURES) - len(corpus.corpus_fixtures())} analysis fixtures")
        return EXIT_OK
    # run-all
    failures = 0
    for fx in corpus.FIXTURES:
        if args.parallel is not None and not fx.parallel_safe:
            out.append(f"{fx.name:18} SKIP  (result depends on scheduling)")
            continue
        ok, detail = corpus.run_fixture(fx, args.parallel, seed)
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        out.append(f"{fx.name:18} {status}  {detail}")
    out.append(f"{'all fixtures pass' if failures == 0 else f'{failures} fixture(s) failed'}")
    return EXIT_OK if failures == 0 else EXIT_NEGATIVE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chr",
                                     description="rule engine and analyses")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a program on a goal")
    run_p.add_argument("program")
    run_p.add_argument("goal", nargs="?", default=None)
    run_p.add_argument("--goal-file")
    mode = run_p.add_mutually_exclusive_group()
    mode.add_argument("--refined", action="store_true", default=False)
    mode.add_argument("--abstract", action="store_true", default=False)
    mode.add_argument("--exhaustive", action="store_true", default=False)
    run_p.add_argument("--parallel", type=int, default=None, metavar="W")
    run_p.add_argument("--trace", action="store_true")
    run_p.add_argument("--seed", type=int, default=Config.seed)
    run_p.add_argument("--steps", type=int, default=Config.step_limit)

    an_p = sub.add_parser("analyze", help="static analyses")
    an_sub = an_p.add_subparsers(dest="analysis", required=True)
    for name in ("confluence", "complete", "equiv", "redundant", "ranking",
                 "complexity"):
        p = an_sub.add_parser(name)
        p.add_argument("program")
        if name == "equiv":
            p.add_argument("other")
        if name in ("complete", "ranking"):
            p.add_argument("--ranking", required=True)
        if name == "complete":
            p.add_argument("--max-iterations", type=int,
                           default=Config.completion_iterations)
        if name == "ranking":
            p.add_argument("--samples", type=int, default=1000)
        if name == "complexity":
            p.add_argument("--measure", default=None, metavar="GOAL")
            p.add_argument("--steps", type=int, default=Config.step_limit)
        p.add_argument("--bound", type=int, default=Config.joinability_bound)
        p.add_argument("--grid", type=int, default=Config.sample_grid)
        p.add_argument("--seed", type=int, default=Config.seed)

    co_p = sub.add_parser("corpus", help="bundled example programs")
    co_sub = co_p.add_subparsers(dest="corpus_command", required=True)
    list_p = co_sub.add_parser("list")
    list_p.add_argument("--seed", type=int, default=Config.seed)
    all_p = co_sub.add_parser("run-all")
    all_p.add_argument("--parallel", type=int, default=None, metavar="W")
    all_p.add_argument("--seed", type=int, default=Config.seed)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out: list = []
    try:
        if args.command == "run":
            code = cmd_run(args, out)
        elif args.command == "analyze":
            code = cmd_analyze(args, out)
        else:
            code = cmd_corpus(args, out)
    except ChrSyntaxError as e:
        print("\n".join(out))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if out:
        print("\n".join(out))
    return code


if __name__ == "__main__":
    sys.exit(main())
