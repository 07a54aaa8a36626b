"""Inner solver: block coordinate descent on the augmented-Lagrangian subproblem.

One sweep is a damped Gauss-Newton pass on ``X`` with ``(Y, Z)`` frozen,
followed by the exact closed-form minimisation over each complementarity pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.linalg import LinAlgError

from ._banded import solve_block_tridiagonal
from .problem import (
    MpccProblem,
    MultiplierState,
    NumericalDomainError,
    VerticalState,
    _phi_from,
    evaluate_values,
    gn_blocks,
)


class SingularSystemError(LinAlgError):
    """Gauss-Newton normal equations stayed singular after all damping retries."""


@dataclass(frozen=True)
class BcdConfig:
    max_sweeps: int = 50
    stagnation_tol: float = 1e-3
    gn_max_iters: int = 50
    gn_step_tol: float = 1e-6
    gn_regularization: float = 2e-5
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_backtracks: int = 30
    # geometric decay of the stagnation tolerance across outer iterations; None keeps it fixed
    stagnation_decay: float | None = None

    def __post_init__(self):
        if self.max_sweeps < 1 or self.gn_max_iters < 1 or self.armijo_max_backtracks < 1:
            raise ValueError("iteration limits must be positive")
        if not (self.stagnation_tol > 0 and self.gn_step_tol > 0 and self.gn_regularization > 0):
            raise ValueError("tolerances and regularization must be positive")
        if not (0 < self.armijo_c1 < 1 and 0 < self.armijo_shrink < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")
        if self.stagnation_decay is not None and not (0 < self.stagnation_decay <= 1):
            raise ValueError("stagnation_decay must lie in (0, 1]")


@dataclass
class GNStepInfo:
    iterations: int = 0
    step_length: float = 0.0
    backtracks: int = 0
    zero_step: bool = False
    grad_inf: float = 0.0
    phi_start: float = 0.0
    phi_end: float = 0.0


@dataclass
class SweepTrace:
    """Per-sweep records; ``grad_x_inf[j]`` is measured at the iterate the sweep starts from."""

    phi: list = field(default_factory=list)
    delta_phi: list = field(default_factory=list)
    grad_x_inf: list = field(default_factory=list)
    step_length: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    gn_iters: list = field(default_factory=list)
    status: str = "max_sweeps"

    @property
    def sweeps(self) -> int:
        return len(self.phi)

    def rows(self):
        for j in range(self.sweeps):
            yield {
                "sweep": j,
                "phi": self.phi[j],
                "delta_phi": self.delta_phi[j],
                "grad_x_inf": self.grad_x_inf[j],
                "step_length": self.step_length[j],
                "backtracks": self.backtracks[j],
                "gn_iters": self.gn_iters[j],
            }


def _solve_damped(blocks, lam: float) -> np.ndarray:
    for _ in range(6):
        try:
            return solve_block_tridiagonal(blocks.diag, blocks.upper, -blocks.grad, shift=lam)
        except LinAlgError:
            lam *= 10.0
    raise SingularSystemError("Gauss-Newton system is singular after 5 damping increases")


def _phi_at(problem, X, w, m) -> float:
    trial = VerticalState(X, w.Y, w.Z)
    try:
        return _phi_from(problem, evaluate_values(problem, X), trial, m)
    except NumericalDomainError:
        return np.inf


def gn_x_update(problem: MpccProblem, w: VerticalState, m: MultiplierState, cfg: BcdConfig):
    """Damped Gauss-Newton iterations on ``X`` with Armijo backtracking.

    Returns the new ``X`` and a :class:`GNStepInfo`.  If the first direction
    admits no acceptable step, ``X`` is returned unchanged with ``zero_step``.
    """
    X = w.X.copy()
    info = GNStepInfo()
    for it in range(cfg.gn_max_iters):
        blocks = gn_blocks(problem, VerticalState(X, w.Y, w.Z), m)
        if it == 0:
            info.grad_inf = float(np.max(np.abs(blocks.grad))) if blocks.grad.size else 0.0
            info.phi_start = blocks.phi
        info.phi_end = blocks.phi
        delta = _solve_damped(blocks, cfg.gn_regularization)
        if np.max(np.abs(delta)) < cfg.gn_step_tol:
            info.zero_step = it == 0
            break
        slope = abs(float(blocks.grad @ delta))
        alpha = 1.0
        accepted = False
        for bt in range(cfg.armijo_max_backtracks + 1):
            trial = X + alpha * delta
            phi_trial = _phi_at(problem, trial, w, m)
            if phi_trial <= blocks.phi - cfg.armijo_c1 * alpha * slope:
                accepted = True
                break
            alpha *= cfg.armijo_shrink
        info.backtracks += bt
        if not accepted:
            info.zero_step = it == 0
            break
        X = trial
        info.iterations = it + 1
        info.step_length = alpha
        info.phi_end = phi_trial
        if alpha * np.max(np.abs(delta)) < cfg.gn_step_tol:
            break
    return X, info


def slack_targets(problem: MpccProblem, G: np.ndarray, H: np.ndarray, m: MultiplierState):
    _, kG, kH = m.kappa_blocks(problem)
    return G + kG / m.rho_h, H + kH / m.rho_h


def closed_form_pairs(tG: np.ndarray, tH: np.ndarray):
    """Exact minimiser of ``(tG - y)^2 + (tH - z)^2`` over ``0 <= y _|_ z >= 0``.

    Ties between the two branches select the ``y`` branch.
    """
    y1 = np.maximum(tG, 0.0) + 0.0
    z2 = np.maximum(tH, 0.0) + 0.0
    cost1 = (tG - y1) ** 2 + tH ** 2
    cost2 = tG ** 2 + (tH - z2) ** 2
    pick_y = cost1 <= cost2
    return np.where(pick_y, y1, 0.0), np.where(pick_y, 0.0, z2)


def slack_update(problem: MpccProblem, w: VerticalState, m: MultiplierState):
    """Closed-form ``(Y, Z)`` block update for fixed ``X``."""
    vals = evaluate_values(problem, w.X)
    return _slack_from_values(problem, vals, m)


def _slack_from_values(problem, vals, m):
    tG, tH = slack_targets(problem, vals.G, vals.H, m)
    Y, Z = closed_form_pairs(tG, tH)
    return Y.ravel(), Z.ravel()


def bcd_solve(problem: MpccProblem, w0: VerticalState, m: MultiplierState, cfg: BcdConfig,
              stagnation_tol: float | None = None, callback=None):
    """Alternate X and slack updates until ``|Phi_j - Phi_{j+1}| <= tol`` or the sweep cap.

    ``callback(w, m)``, when given, sees every completed iterate.
    """
    tol = cfg.stagnation_tol if stagnation_tol is None else stagnation_tol
    w = w0.copy()
    trace = SweepTrace()
    phi_prev = _phi_from(problem, evaluate_values(problem, w.X), w, m)
    for _ in range(cfg.max_sweeps):
        X, info = gn_x_update(problem, w, m, cfg)
        vals = evaluate_values(problem, X)
        Y, Z = _slack_from_values(problem, vals, m)
        w = VerticalState(X, Y, Z)
        phi = _phi_from(problem, vals, w, m)
        trace.phi.append(phi)
        trace.delta_phi.append(phi_prev - phi)
        trace.grad_x_inf.append(info.grad_inf)
        trace.step_length.append(info.step_length)
        trace.backtracks.append(info.backtracks)
        trace.gn_iters.append(info.iterations)
        if callback is not None:
            callback(w, m)
        if not np.isfinite(phi):
            trace.status = "diverged"
            break
        if abs(phi_prev - phi) <= tol:
            trace.status = "stagnated"
            break
        phi_prev = phi
    return w, trace
