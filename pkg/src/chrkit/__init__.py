"""chrkit: a Constraint Handling Rules engine and static-analysis toolkit.

Multiset rewriting with guarded committed-choice rules over a built-in
store of equalities and arithmetic comparisons, with abstract, refined and
parallel executors plus confluence, completion, operational-equivalence and
termination analyses.
"""
from .terms import (Var, Num, Compound, Term, match, unify, apply_subst,
                    compose_subst, rename_apart, eval_arith, partial_eval,
                    EvalError, DivisionByZero, NonGround, UnknownFunction)
from .syntax import (Rule, Program, parse_program, parse_goal, parse_term,
                     rule_text, program_text, term_text, logical_reading,
                     ChrSyntaxError, ArityClash, BuiltinInHead)
from .builtins import (BuiltinStore, EMPTY_STORE, tell, ask, consistent,
                       normalize, NonGroundComparison, GuardEvaluationError)
from .state import (IdConstraint, Token, State, initial_state,
                    add_constraints, state_equiv, format_state, view)
from .engine import (RuleInstance, Trace, applicable_instances,
                     apply_instance, run_abstract, run_refined,
                     resume_refined, interrupt_resume, StepLimitExceeded,
                     BodyEvaluationError, exhaustive_normal_forms)
from .parallel import (ParallelStep, select_parallel, run_parallel,
                       apply_parallel_step, serialize_round)
from .analysis import (MinimalState, CriticalPair, RankingSpec,
                       minimal_state, critical_pairs, joinable,
                       check_confluence, complete,
                       check_operational_equivalence, find_redundant_rules,
                       parse_ranking, verify_ranking, complexity_bound,
                       UnorientablePair)

__version__ = "0.1.0"
