"""Diagnostic studies: stagnation calibration and 2-D iterate paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aula import AulaConfig, run_outer_loop
from .bcd import BcdConfig, bcd_solve
from .penalty import penalized_problem
from .problem import MpccProblem, MultiplierState, assemble_vertical, original_feasibility


@dataclass(frozen=True)
class CorrelationFit:
    """Log-log fit ``||G^X||_inf ~ c * sqrt(dPhi)^exponent`` over all recorded pairs."""

    rho: float
    exponent: float
    constant: float
    n_pairs: int
    n_runs: int


def loglog_fit(sqrt_dphi, grad_inf) -> CorrelationFit:
    """Pearson correlation and least-squares power law in log-log space.

    Pairs with a non-positive entry carry no log and are dropped.
    """
    s = np.asarray(sqrt_dphi, dtype=float)
    g = np.asarray(grad_inf, dtype=float)
    keep = (s > 0) & (g > 0) & np.isfinite(s) & np.isfinite(g)
    if keep.sum() < 3:
        raise ValueError("need at least three positive pairs for a log-log fit")
    a, b = np.log(s[keep]), np.log(g[keep])
    slope, icept = np.polyfit(a, b, 1)
    return CorrelationFit(float(np.corrcoef(a, b)[0, 1]), float(slope), float(np.exp(icept)), int(keep.sum()), 1)


def stagnation_pairs(problem: MpccProblem, x_init, bcd_cfg: BcdConfig, rho: float = 1.0, sweeps: int = 500):
    """``(sqrt(dPhi_j), ||G^X(w_j)||_inf)`` over one long inner solve at zero multipliers."""
    w = assemble_vertical(problem, x_init)
    m = MultiplierState.zeros(problem, rho, rho)
    cfg = BcdConfig(**{**vars(bcd_cfg), "max_sweeps": sweeps, "stagnation_tol": 1e-14})
    _, trace = bcd_solve(problem, w, m, cfg)
    dphi = np.asarray(trace.delta_phi)
    # the gradient is measured at the iterate each sweep starts from
    return np.sqrt(np.maximum(dphi, 0.0)), np.asarray(trace.grad_x_inf)


def stagnation_study(problems, bcd_cfg: BcdConfig, seed: int = 0, scale: float = 1.0,
                     rho: float = 1.0, sweeps: int = 500):
    """Pool stagnation pairs from random normal initializations, one per problem.

    Returns the fit and the per-sweep rows ``(run, sweep, sqrt_dphi, grad_x_inf)``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    s_all, g_all = [], []
    for run, prob in enumerate(problems):
        x0 = rng.normal(scale=scale, size=prob.size_x)
        s, g = stagnation_pairs(prob, x0, bcd_cfg, rho, sweeps)
        s_all.append(s)
        g_all.append(g)
        rows.extend((run, j, float(a), float(b)) for j, (a, b) in enumerate(zip(s, g)))
    fit = loglog_fit(np.concatenate(s_all), np.concatenate(g_all))
    fit = CorrelationFit(fit.rho, fit.exponent, fit.constant, fit.n_pairs, len(s_all))
    return fit, rows


def iterate_path(problem: MpccProblem, solver: str, x_init=None, cfg: AulaConfig | None = None,
                 bcd_cfg: BcdConfig | None = None, rho_c: float = 1e4):
    """Record every completed inner iterate of a solve.

    Rows are ``(outer, sweep, X..., Y..., Z...)``; the penalty solver has no slacks.
    """
    cfg = cfg or AulaConfig()
    bcd_cfg = bcd_cfg or BcdConfig()
    if solver == "impact":
        prob = problem
    elif solver == "penalty":
        prob = penalized_problem(problem, rho_c)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    x0 = np.zeros(problem.size_x) if x_init is None else np.asarray(x_init, dtype=float).ravel()
    rows = []
    pos = {"outer": 0, "sweep": 0}

    def record(w, m):
        rows.append((pos["outer"], pos["sweep"], *w.X, *w.Y, *w.Z))
        pos["sweep"] += 1

    def inner(p, w, m, c, tol):
        out = bcd_solve(p, w, m, c, tol, callback=record)
        pos["outer"] += 1
        pos["sweep"] = 0
        return out

    rep = run_outer_loop(prob, assemble_vertical(prob, x0), cfg, bcd_cfg,
                         lambda X: original_feasibility(problem, X), inner=inner)
    return rows, rep
