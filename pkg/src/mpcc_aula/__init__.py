"""Augmented-Lagrangian / block-coordinate-descent solver for trajectory MPCCs."""

from .aula import AulaConfig, SolveReport, aula_solve
from .bcd import BcdConfig, SingularSystemError, bcd_solve, closed_form_pairs, slack_update
from .problem import (
    FeasibilityReport,
    MpccProblem,
    MultiplierState,
    NumericalDomainError,
    RejectedInputError,
    VerticalState,
    assemble_vertical,
    check_feasibility,
    eval_gn_system,
    eval_phi,
    eval_phi_gradient,
)
from .stationarity import PairClass, classify_pairs, kkt_residual, pair_mismatch, primal_residual

__all__ = [
    "AulaConfig",
    "BcdConfig",
    "FeasibilityReport",
    "MpccProblem",
    "MultiplierState",
    "NumericalDomainError",
    "PairClass",
    "RejectedInputError",
    "SingularSystemError",
    "SolveReport",
    "VerticalState",
    "assemble_vertical",
    "aula_solve",
    "bcd_solve",
    "check_feasibility",
    "classify_pairs",
    "closed_form_pairs",
    "eval_gn_system",
    "eval_phi",
    "eval_phi_gradient",
    "kkt_residual",
    "pair_mismatch",
    "primal_residual",
    "slack_update",
]
