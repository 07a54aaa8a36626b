"""Squared-penalty baseline on the same Gauss-Newton and outer-loop machinery.

Complementarity enters the least-squares stack as residuals
``sqrt(rho_c) * G_i * H_i`` and the sign conditions ``G >= 0, H >= 0`` become
ordinary inequality rows.  There are no slack variables, so the inner solver
reduces to damped Gauss-Newton on ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import problem as _prob
from .aula import AulaConfig, SolveReport, run_outer_loop
from .bcd import BcdConfig
from .problem import MpccProblem, assemble_vertical


@dataclass(frozen=True)
class PenaltyConfig:
    rho_c: float = 1e4
    aula: AulaConfig = field(default_factory=AulaConfig)
    bcd: BcdConfig = field(default_factory=BcdConfig)

    def __post_init__(self):
        if not self.rho_c > 0:
            raise ValueError("rho_c must be positive")


def penalized_problem(problem: MpccProblem, rho_c: float) -> MpccProblem:
    """Slack-free problem with the complementarity products moved into the residual stack."""
    if problem.n_c == 0:
        return problem
    nc, nr, ng = problem.n_c, problem.n_r, problem.n_g
    sq = np.sqrt(rho_c)
    T = problem.horizon

    def r(X2):
        return np.concatenate([problem.r(X2), sq * problem.G(X2) * problem.H(X2)], axis=1)

    def r_jac(X2):
        G, H = problem.G(X2), problem.H(X2)
        JG, JH = problem.G_jac(X2), problem.H_jac(X2)
        Jc = sq * (H[:, :, None] * JG + G[:, :, None] * JH)
        return np.concatenate([np.broadcast_to(problem.r_jac(X2), (T, nr, problem.n_x)), Jc], axis=1)

    def g(X2):
        parts = [problem.g(X2)] if ng else []
        return np.concatenate(parts + [-problem.G(X2), -problem.H(X2)], axis=1)

    def g_jac(X2):
        parts = [np.broadcast_to(problem.g_jac(X2), (T, ng, problem.n_x))] if ng else []
        JG = np.broadcast_to(problem.G_jac(X2), (T, nc, problem.n_x))
        JH = np.broadcast_to(problem.H_jac(X2), (T, nc, problem.n_x))
        return np.concatenate(parts + [-JG, -JH], axis=1)

    r_mask = np.ones((T, nr), dtype=bool) if problem.r_mask is None else problem.r_mask
    return MpccProblem(
        horizon=T,
        n_x=problem.n_x,
        n_c=0,
        n_r=nr + nc,
        n_h=problem.n_h,
        n_g=ng + 2 * nc,
        r=r,
        r_jac=r_jac,
        h=problem.h,
        h_jac=problem.h_jac,
        g=g,
        g_jac=g_jac,
        eq_mask=problem.eq_mask,
        r_mask=np.concatenate([r_mask, np.ones((T, nc), dtype=bool)], axis=1),
        n_e=problem.n_e,
        name=problem.name + "_penalty",
        meta=problem.meta,
    )


def penalty_solve(problem: MpccProblem, x_init=None, pcfg: PenaltyConfig | None = None) -> SolveReport:
    """Solve with the squared complementarity penalty; termination matches :func:`aula_solve`."""
    pcfg = pcfg or PenaltyConfig()
    derived = penalized_problem(problem, pcfg.rho_c)
    x0 = np.zeros(problem.size_x) if x_init is None else np.asarray(x_init, dtype=float).ravel()
    w = assemble_vertical(derived, x0)
    rep = run_outer_loop(derived, w, pcfg.aula, pcfg.bcd,
                         lambda X: _prob.original_feasibility(problem, X))
    # report feasibility in terms of the original problem
    rep.feasibility = _prob.original_feasibility(problem, rep.state.X)
    return rep
