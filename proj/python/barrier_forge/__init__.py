"""Synthesis, sound verification and deployment of robust discrete-time
control barrier functions."""

from ._core import (
    DomainError,
    Expr,
    ExprParseError,
    InfeasibleStateError,
    Problem,
    ProblemFileError,
    load_problem,
    load_problem_file,
    parse_expr,
    safe_control,
    simulate,
    synthesize,
    verify,
    verify_pair,
)

__all__ = [
    "DomainError",
    "Expr",
    "ExprParseError",
    "InfeasibleStateError",
    "Problem",
    "ProblemFileError",
    "load_problem",
    "load_problem_file",
    "parse_expr",
    "safe_control",
    "simulate",
    "synthesize",
    "verify",
    "verify_pair",
]
