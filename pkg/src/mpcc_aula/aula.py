"""Safeguarded augmented-Lagrangian outer loop for trajectory MPCCs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import problem as _prob
from .bcd import BcdConfig, SingularSystemError, bcd_solve
from .problem import (
    FeasibilityReport,
    MpccProblem,
    MultiplierState,
    NumericalDomainError,
    VerticalState,
    assemble_vertical,
    evaluate_values,
    hbar_values,
)


@dataclass(frozen=True)
class AulaConfig:
    kappa_min: float = -1e6
    kappa_max: float = 1e6
    mu_max: float = 1e6
    gamma: float = 1.1
    eta: float = 0.9
    rho_h0: float = 1.0
    rho_g0: float = 1.0
    rho_max: float = 1e8
    eps_w: float = 1e-3
    eps_g: float = 1e-5
    eps_h: float = 1e-5
    eps_comp: float = 1e-5
    max_outer: int = 1000
    max_total_sweeps: int = 2000

    def __post_init__(self):
        if not self.kappa_min < self.kappa_max:
            raise ValueError("kappa_min must be below kappa_max")
        if self.mu_max <= 0 or self.gamma <= 1 or not (0 <= self.eta <= 1):
            raise ValueError("need mu_max > 0, gamma > 1 and eta in [0, 1]")
        if min(self.rho_h0, self.rho_g0) <= 0 or self.rho_max < max(self.rho_h0, self.rho_g0):
            raise ValueError("initial penalties must be positive and below rho_max")
        if min(self.eps_w, self.eps_g, self.eps_h, self.eps_comp) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_total_sweeps < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolveReport:
    status: str
    outer_iters: int
    total_sweeps: int
    feasibility: FeasibilityReport
    original_feasibility: FeasibilityReport
    wall_time: float
    derivative_time: float
    history: list
    state: VerticalState
    multipliers: MultiplierState
    sweeps: list = field(default_factory=list)
    last_dw: float = float("inf")

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "outer_iters": self.outer_iters,
            "total_sweeps": self.total_sweeps,
            "wall_time": self.wall_time,
            "derivative_time": self.derivative_time,
            "last_dw": self.last_dw,
            "feasibility": vars(self.feasibility),
            "original_feasibility": vars(self.original_feasibility),
            "rho_h": self.multipliers.rho_h,
            "rho_g": self.multipliers.rho_g,
            "history": self.history,
        }


def safeguard_multipliers(m: MultiplierState, cfg: AulaConfig) -> MultiplierState:
    return MultiplierState(
        np.clip(m.kappa, cfg.kappa_min, cfg.kappa_max),
        np.clip(m.mu, 0.0, cfg.mu_max),
        m.rho_h,
        m.rho_g,
    )


def update_multipliers(m_bar: MultiplierState, w: VerticalState, problem: MpccProblem):
    """First-order multiplier update; returns the new state and the residual ``zeta``."""
    vals = evaluate_values(problem, w.X)
    hbar = hbar_values(problem, vals, w).ravel()
    g = vals.g.ravel()
    kappa = m_bar.kappa + m_bar.rho_h * hbar
    mu = np.maximum(m_bar.mu + m_bar.rho_g * g, 0.0)
    zeta = np.minimum(mu, -g)
    return MultiplierState(kappa, mu, m_bar.rho_h, m_bar.rho_g), zeta


def update_penalties(prev, curr, m: MultiplierState, cfg: AulaConfig, k: int) -> MultiplierState:
    """Grow both penalties by ``gamma`` unless the combined violation fell by ``eta``.

    ``prev`` and ``curr`` are ``(||zeta||_inf, ||hbar||_inf)`` pairs.
    """
    if k == 0 or max(curr) <= cfg.eta * max(prev):
        return m
    return MultiplierState(
        m.kappa,
        m.mu,
        min(cfg.gamma * m.rho_h, cfg.rho_max),
        min(cfg.gamma * m.rho_g, cfg.rho_max),
    )


def _inf_norm(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def run_outer_loop(problem: MpccProblem, w: VerticalState, cfg: AulaConfig, bcd_cfg: BcdConfig,
                   original_check: Callable[[np.ndarray], FeasibilityReport],
                   inner: Optional[Callable] = None) -> SolveReport:
    """Generic safeguarded outer loop shared by the vertical and penalty formulations."""
    inner = inner or bcd_solve
    start = time.perf_counter()
    timer = _prob.DerivativeTimer()
    token = _prob.DERIVATIVE_TIMER.set(timer)
    m = MultiplierState.zeros(problem, cfg.rho_h0, cfg.rho_g0)
    dw = float("inf")
    prev = None
    history: list = []
    sweeps: list = []
    total = 0
    status = "max_outer_reached"
    k = 0
    try:
        while True:
            feas = _prob.check_feasibility(problem, w)
            orig = original_check(w.X)
            if (dw < cfg.eps_w and feas.ineq_inf < cfg.eps_g and feas.eq_inf < cfg.eps_h
                    and orig.comp_inf <= cfg.eps_comp):
                status = "converged"
                break
            if k >= cfg.max_outer or total >= cfg.max_total_sweeps:
                break
            m_bar = safeguard_multipliers(m, cfg)
            tol = bcd_cfg.stagnation_tol
            if bcd_cfg.stagnation_decay is not None:
                tol = tol * bcd_cfg.stagnation_decay ** k
            try:
                w_new, trace = inner(problem, w, m_bar, bcd_cfg, tol)
            except (NumericalDomainError, SingularSystemError, FloatingPointError):
                status = "inner_diverged"
                break
            for row in trace.rows():
                row["outer"] = k
                sweeps.append(row)
            total += trace.sweeps
            if trace.status == "diverged":
                status = "inner_diverged"
                w = w_new
                break
            dw = _inf_norm(w_new.stacked() - w.stacked())
            m_new, zeta = update_multipliers(m_bar, w_new, problem)
            vals = evaluate_values(problem, w_new.X)
            curr = (_inf_norm(zeta), _inf_norm(hbar_values(problem, vals, w_new)))
            history.append({
                "outer": k,
                "zeta_inf": curr[0],
                "hbar_inf": curr[1],
                "rho_h": m_bar.rho_h,
                "rho_g": m_bar.rho_g,
                "phi": trace.phi[-1] if trace.phi else float("nan"),
                "sweeps": trace.sweeps,
                "dw": dw,
            })
            m = update_penalties(prev, curr, m_new, cfg, k)
            prev = curr
            w = w_new
            k += 1
    finally:
        _prob.DERIVATIVE_TIMER.reset(token)
    feas = _prob.check_feasibility(problem, w)
    return SolveReport(
        status=status,
        outer_iters=k,
        total_sweeps=total,
        feasibility=feas,
        original_feasibility=original_check(w.X),
        wall_time=time.perf_counter() - start,
        derivative_time=timer.seconds,
        history=history,
        state=w,
        multipliers=m,
        sweeps=sweeps,
        last_dw=dw,
    )


def aula_solve(problem: MpccProblem, x_init=None, cfg: AulaConfig | None = None,
               bcd_cfg: BcdConfig | None = None) -> SolveReport:
    """Solve a trajectory MPCC with the safeguarded AuLa outer loop and BCD inner solver."""
    cfg = cfg or AulaConfig()
    bcd_cfg = bcd_cfg or BcdConfig()
    x0 = np.zeros(problem.size_x) if x_init is None else np.asarray(x_init, dtype=float).ravel()
    w = assemble_vertical(problem, x0)
    return run_outer_loop(problem, w, cfg, bcd_cfg, lambda X: _prob.original_feasibility(problem, X))
