"""M-stationarity diagnostics for the vertical form.

Pairs are classified into the index sets ``I+0``, ``I0+`` and ``I00``.  The
closed-form residual combines the X-block gradient, primal complementarity
feasibility and a per-pair distance of ``(grad_Y Phi, grad_Z Phi)`` to the
admissible multiplier set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .problem import MpccProblem, MultiplierState, VerticalState, eval_phi_gradient

TAU_CLS = 1e-9
ORACLE_RANGE = 10.0


class PairClass(enum.IntEnum):
    PLUS_ZERO = 0
    ZERO_PLUS = 1
    BIACTIVE = 2
    INFEASIBLE = 3


class OracleRangeError(ValueError):
    """Oracle input lies outside the validated box."""


def classify_pairs(Y, Z, tau_cls: float = TAU_CLS) -> np.ndarray:
    """Per-pair :class:`PairClass` codes; entries with ``|v| <= tau_cls`` count as zero."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    ypos = Y > tau_cls
    zpos = Z > tau_cls
    bad = (Y < -tau_cls) | (Z < -tau_cls) | (ypos & zpos)
    out = np.full(Y.shape, PairClass.BIACTIVE, dtype=int)
    out[ypos & ~zpos] = PairClass.PLUS_ZERO
    out[zpos & ~ypos] = PairClass.ZERO_PLUS
    out[bad] = PairClass.INFEASIBLE
    return out


def _pos(v):
    return np.maximum(v, 0.0)


def pair_mismatch(a, b, classes) -> np.ndarray:
    """Closed-form distance of ``(a, b)`` to the admissible multiplier set of each class."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    classes = np.asarray(classes)
    if np.any(classes == PairClass.INFEASIBLE):
        raise ValueError("pair_mismatch is undefined for infeasible pairs")
    biactive = np.minimum(np.maximum(_pos(-a), _pos(-b)), np.minimum(np.abs(a), np.abs(b)))
    return np.select(
        [classes == PairClass.PLUS_ZERO, classes == PairClass.ZERO_PLUS],
        [np.abs(a), np.abs(b)],
        biactive,
    )


def _witness(a, b, classes):
    """Nearest admissible ``(u, v)`` in the max-norm, branch by branch."""
    u = np.full(a.shape, np.nan)
    v = np.full(a.shape, np.nan)
    pz = classes == PairClass.PLUS_ZERO
    zp = classes == PairClass.ZERO_PLUS
    bi = classes == PairClass.BIACTIVE
    u[pz], v[pz] = 0.0, b[pz]
    u[zp], v[zp] = a[zp], 0.0
    # biactive: pick the branch attaining the minimum, quadrant first
    quad = np.maximum(_pos(-a), _pos(-b))
    use_q = bi & (quad <= np.abs(a)) & (quad <= np.abs(b))
    use_v = bi & ~use_q & (np.abs(a) <= np.abs(b))
    use_u = bi & ~use_q & ~use_v
    u[use_q], v[use_q] = _pos(a[use_q]), _pos(b[use_q])
    u[use_v], v[use_v] = 0.0, b[use_v]
    u[use_u], v[use_u] = a[use_u], 0.0
    return u, v


def witness_is_admissible(u, v, classes) -> bool:
    """Branch-pattern check of a witness against the index sets."""
    u = np.asarray(u)
    v = np.asarray(v)
    classes = np.asarray(classes)
    pz = classes == PairClass.PLUS_ZERO
    zp = classes == PairClass.ZERO_PLUS
    bi = classes == PairClass.BIACTIVE
    ok_bi = ((u[bi] >= 0) & (v[bi] >= 0)) | (u[bi] == 0) | (v[bi] == 0)
    return bool(np.all(u[pz] == 0) and np.all(v[zp] == 0) and np.all(ok_bi))


def primal_residual(Y, Z) -> float:
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Y.size == 0:
        return 0.0
    return float(max(np.max(-np.minimum(Y, 0.0)), np.max(-np.minimum(Z, 0.0)), np.max(np.abs(Y * Z))) + 0.0)


@dataclass
class KktResidualReport:
    x_block: float
    pri: float
    pair_mismatch: float
    r_in: float
    d: np.ndarray
    classes: np.ndarray
    u: np.ndarray
    v: np.ndarray


def kkt_residual(problem: MpccProblem, w: VerticalState, m: MultiplierState,
                 tau_cls: float = TAU_CLS) -> KktResidualReport:
    """Closed-form inner residual ``r_in`` at a vertical state."""
    grad = eval_phi_gradient(problem, w, m)
    nx, nc = problem.size_x, problem.size_c
    gx = grad[:nx]
    a = grad[nx:nx + nc]
    b = grad[nx + nc:]
    classes = classify_pairs(w.Y, w.Z, tau_cls)
    feasible = classes != PairClass.INFEASIBLE
    d = np.full(nc, np.nan)
    d[feasible] = pair_mismatch(a[feasible], b[feasible], classes[feasible])
    u, v = _witness(a, b, classes)
    x_block = float(np.max(np.abs(gx))) if gx.size else 0.0
    pri = primal_residual(w.Y, w.Z)
    mism = float(np.max(d[feasible])) if np.any(feasible) else 0.0
    return KktResidualReport(x_block, pri, mism, max(x_block, pri, mism), d, classes, u, v)


# ---------------------------------------------------------------------------
# validation oracle


def _dist_interval(x, lo, hi):
    return np.maximum(np.maximum(lo - x, x - hi), 0.0)


def _branch_sets(cls):
    """Admissible set of a class as boxes ``(u_lo, u_hi, v_lo, v_hi)`` within the oracle range."""
    R = ORACLE_RANGE
    # the quadrant extends past the range; 2R keeps it unbounded for inputs inside [-R, R]
    axis_u = (-R, R, 0.0, 0.0)
    axis_v = (0.0, 0.0, -R, R)
    quadrant = (0.0, 2 * R, 0.0, 2 * R)
    if cls == PairClass.PLUS_ZERO:
        return [axis_v]
    if cls == PairClass.ZERO_PLUS:
        return [axis_u]
    return [quadrant, axis_u, axis_v]


def _grid_distance(a, b, box, n):
    ulo, uhi, vlo, vhi = box
    du = np.min(np.abs(a - np.linspace(ulo, uhi, n))) if uhi > ulo else abs(a - ulo)
    dv = np.min(np.abs(b - np.linspace(vlo, vhi, n))) if vhi > vlo else abs(b - vlo)
    return max(du, dv)


def normal_cone_oracle(a_vec, b_vec, classes, grid_points: int = 20001, check_grid: bool = True) -> np.ndarray:
    """Reference max-norm distance of each ``(a_i, b_i)`` to its admissible multiplier set.

    Exact values come from enumerating the branch boxes.  With ``check_grid``
    each value is cross-checked against a dense grid of ``grid_points`` samples
    per box side over ``[-10, 10]``; the grid can only overestimate, by at most
    half its spacing.
    """
    a_vec = np.asarray(a_vec, dtype=float).ravel()
    b_vec = np.asarray(b_vec, dtype=float).ravel()
    classes = np.asarray(classes).ravel()
    if np.any(np.abs(a_vec) > ORACLE_RANGE) or np.any(np.abs(b_vec) > ORACLE_RANGE):
        raise OracleRangeError("oracle inputs must lie in [-10, 10]")
    if np.any(classes == PairClass.INFEASIBLE):
        raise ValueError("oracle is undefined for infeasible pairs")
    out = np.empty(a_vec.size)
    spacing = 2 * ORACLE_RANGE / (grid_points - 1)
    for i, (a, b, c) in enumerate(zip(a_vec, b_vec, classes)):
        boxes = _branch_sets(c)
        exact = min(
            max(float(_dist_interval(a, bx[0], bx[1])), float(_dist_interval(b, bx[2], bx[3])))
            for bx in boxes
        )
        if check_grid:
            grid = min(_grid_distance(a, b, bx, grid_points) for bx in boxes)
            if not (exact - 1e-12 <= grid <= exact + spacing):
                raise AssertionError(f"grid cross-check failed at pair {i}: exact {exact}, grid {grid}")
        out[i] = exact
    return out
