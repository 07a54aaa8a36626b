"""Trajectory MPCC abstraction, vertical-form lift and augmented-Lagrangian objective.

All per-step callbacks are vectorised over the horizon: they receive the whole
trajectory ``X`` as a ``(T, n_x)`` array and return row ``t`` for step ``t``.
Stacked vectors are laid out time-major, then row-major.  For step ``t`` the
stacked equality block is ``hbar_t = [h_t; G_t - y_t; H_t - z_t]``.
"""

from __future__ import annotations

import contextvars
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


class RejectedInputError(ValueError):
    """Input arrays do not match the problem dimensions."""


class NumericalDomainError(FloatingPointError):
    """A callback returned a non-finite value."""

    def __init__(self, block: str, t: int, row: int):
        super().__init__(f"non-finite value in {block} at step t={t}, row={row}")
        self.block = block
        self.t = t
        self.row = row


Callback = Callable[[np.ndarray], np.ndarray]


class DerivativeTimer:
    """Accumulates seconds spent evaluating callback Jacobians."""

    def __init__(self):
        self.seconds = 0.0


DERIVATIVE_TIMER: contextvars.ContextVar = contextvars.ContextVar("derivative_timer", default=None)


@dataclass(frozen=True, eq=False)
class MpccProblem:
    """Trajectory MPCC ``min 1/2 sum r_t'r_t`` s.t. ``h = 0, g <= 0, 0 <= G _|_ H >= 0``.

    ``h(X)[t]`` is the equality block coupling ``x_t`` and ``x_{t+1}``; its
    Jacobian callback returns ``(d h_t / d x_t, d h_t / d x_{t+1})``, the second
    block being ignored at ``t = T - 1``.  ``eq_mask`` switches individual rows
    of ``h`` off, which is how the terminal reduction and one-sided boundary
    rows are expressed with a fixed per-step width.
    """

    horizon: int
    n_x: int
    n_c: int
    n_r: int
    n_h: int
    n_g: int
    r: Callback
    r_jac: Callback
    h: Optional[Callback] = None
    h_jac: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None
    g: Optional[Callback] = None
    g_jac: Optional[Callback] = None
    G: Optional[Callback] = None
    G_jac: Optional[Callback] = None
    H: Optional[Callback] = None
    H_jac: Optional[Callback] = None
    eq_mask: Optional[np.ndarray] = None
    r_mask: Optional[np.ndarray] = None
    n_e: int = 0
    name: str = "mpcc"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1 or self.n_x < 1:
            raise RejectedInputError("horizon and n_x must be positive")
        for dim, fun, jac, label in (
            (self.n_h, self.h, self.h_jac, "h"),
            (self.n_g, self.g, self.g_jac, "g"),
            (self.n_c, self.G, self.G_jac, "G"),
            (self.n_c, self.H, self.H_jac, "H"),
        ):
            if dim > 0 and (fun is None or jac is None):
                raise RejectedInputError(f"{label} has {dim} rows but no callback")
        for mask, rows, label in ((self.eq_mask, self.n_h, "eq_mask"), (self.r_mask, self.n_r, "r_mask")):
            if mask is not None and np.shape(mask) != (self.horizon, rows):
                raise RejectedInputError(f"{label} must have shape {(self.horizon, rows)}")

    @property
    def n_hbar(self) -> int:
        return self.n_h + 2 * self.n_c

    @property
    def size_x(self) -> int:
        return self.horizon * self.n_x

    @property
    def size_c(self) -> int:
        return self.horizon * self.n_c

    def reshape_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.size != self.size_x:
            raise RejectedInputError(f"X has {X.size} entries, expected T*n_x = {self.size_x}")
        return X.reshape(self.horizon, self.n_x)


@dataclass
class VerticalState:
    """Stacked decision vector ``w = (X, Y, Z)`` of the vertical form."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def copy(self) -> "VerticalState":
        return VerticalState(self.X.copy(), self.Y.copy(), self.Z.copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.X, self.Y, self.Z])


@dataclass
class MultiplierState:
    """Equality multipliers ``kappa`` (over hbar rows), inequality ``mu`` and penalties."""

    kappa: np.ndarray
    mu: np.ndarray
    rho_h: float = 1.0
    rho_g: float = 1.0

    @classmethod
    def zeros(cls, problem: MpccProblem, rho_h: float = 1.0, rho_g: float = 1.0) -> "MultiplierState":
        T = problem.horizon
        return cls(np.zeros(T * problem.n_hbar), np.zeros(T * problem.n_g), rho_h, rho_g)

    def copy(self) -> "MultiplierState":
        return MultiplierState(self.kappa.copy(), self.mu.copy(), self.rho_h, self.rho_g)

    def kappa_blocks(self, problem: MpccProblem):
        """Split ``kappa`` into ``(kappa_h, kappa_G, kappa_H)`` per-step arrays."""
        K = self.kappa.reshape(problem.horizon, problem.n_hbar)
        nh, nc = problem.n_h, problem.n_c
        return K[:, :nh], K[:, nh:nh + nc], K[:, nh + nc:]


@dataclass(frozen=True)
class FeasibilityReport:
    eq_inf: float
    ineq_inf: float
    comp_inf: float

    def max(self) -> float:
        return max(self.eq_inf, self.ineq_inf, self.comp_inf)


# ---------------------------------------------------------------------------
# callback evaluation


def _check_finite(block: str, arr: np.ndarray):
    if not np.isfinite(arr).all():
        bad = np.argwhere(~np.isfinite(arr.reshape(arr.shape[0], -1)))[0]
        raise NumericalDomainError(block, int(bad[0]), int(bad[1]))


def _call(problem: MpccProblem, fun, rows: int, X2: np.ndarray, block: str) -> np.ndarray:
    T = problem.horizon
    if rows == 0:
        return np.zeros((T, 0))
    out = np.asarray(fun(X2), dtype=float)
    if out.shape != (T, rows):
        raise RejectedInputError(f"{block} returned shape {out.shape}, expected {(T, rows)}")
    _check_finite(block, out)
    return out


@dataclass
class _Values:
    r: np.ndarray
    h: np.ndarray
    g: np.ndarray
    G: np.ndarray
    H: np.ndarray


@dataclass
class _Jacobians:
    r: np.ndarray
    h_cur: np.ndarray
    h_next: np.ndarray
    g: np.ndarray
    G: np.ndarray
    H: np.ndarray


def evaluate_values(problem: MpccProblem, X) -> _Values:
    X2 = problem.reshape_x(X)
    r = _call(problem, problem.r, problem.n_r, X2, "r")
    if problem.r_mask is not None:
        r = np.where(problem.r_mask, r, 0.0)
    h = _call(problem, problem.h, problem.n_h, X2, "h")
    if problem.eq_mask is not None:
        h = np.where(problem.eq_mask, h, 0.0)
    g = _call(problem, problem.g, problem.n_g, X2, "g")
    G = _call(problem, problem.G, problem.n_c, X2, "G")
    H = _call(problem, problem.H, problem.n_c, X2, "H")
    return _Values(r, h, g, G, H)


def _call_jac(problem, fun, rows, X2, block):
    T, n = problem.horizon, problem.n_x
    if rows == 0:
        return np.zeros((T, 0, n))
    out = np.asarray(fun(X2), dtype=float)
    if out.shape != (T, rows, n):
        raise RejectedInputError(f"{block} Jacobian has shape {out.shape}, expected {(T, rows, n)}")
    _check_finite(block + "_jac", out)
    return out


def evaluate_jacobians(problem: MpccProblem, X) -> _Jacobians:
    timer = DERIVATIVE_TIMER.get()
    if timer is None:
        return _evaluate_jacobians(problem, X)
    start = time.perf_counter()
    try:
        return _evaluate_jacobians(problem, X)
    finally:
        timer.seconds += time.perf_counter() - start


def _evaluate_jacobians(problem: MpccProblem, X) -> _Jacobians:
    X2 = problem.reshape_x(X)
    T, n = problem.horizon, problem.n_x
    Jr = _call_jac(problem, problem.r_jac, problem.n_r, X2, "r")
    if problem.r_mask is not None:
        Jr = Jr * problem.r_mask[:, :, None]
    if problem.n_h:
        A, B = problem.h_jac(X2)
        A = np.asarray(A, dtype=float)
        B = np.array(B, dtype=float)
        for blk, lab in ((A, "h_jac_cur"), (B, "h_jac_next")):
            if blk.shape != (T, problem.n_h, n):
                raise RejectedInputError(f"{lab} has shape {blk.shape}")
            _check_finite(lab, blk)
        B[-1] = 0.0
        if problem.eq_mask is not None:
            A = A * problem.eq_mask[:, :, None]
            B = B * problem.eq_mask[:, :, None]
    else:
        A = B = np.zeros((T, 0, n))
    Jg = _call_jac(problem, problem.g_jac, problem.n_g, X2, "g")
    JG = _call_jac(problem, problem.G_jac, problem.n_c, X2, "G")
    JH = _call_jac(problem, problem.H_jac, problem.n_c, X2, "H")
    return _Jacobians(Jr, A, B, Jg, JG, JH)


def _check_state(problem: MpccProblem, w: VerticalState):
    problem.reshape_x(w.X)
    if w.Y.size != problem.size_c or w.Z.size != problem.size_c:
        raise RejectedInputError("Y and Z must have T*n_c entries")


def _check_multipliers(problem: MpccProblem, m: MultiplierState):
    if m.kappa.size != problem.horizon * problem.n_hbar or m.mu.size != problem.horizon * problem.n_g:
        raise RejectedInputError("multiplier sizes do not match the problem")
    if not (m.rho_h > 0 and m.rho_g > 0):
        raise RejectedInputError("penalties must be positive")


def hbar_values(problem: MpccProblem, vals: _Values, w: VerticalState) -> np.ndarray:
    """Stacked equality values ``(T, n_h + 2 n_c)``."""
    T, nc = problem.horizon, problem.n_c
    Y = w.Y.reshape(T, nc)
    Z = w.Z.reshape(T, nc)
    return np.concatenate([vals.h, vals.G - Y, vals.H - Z], axis=1)


# ---------------------------------------------------------------------------
# vertical lift


def assemble_vertical(problem: MpccProblem, X) -> VerticalState:
    """Lift a trajectory to the vertical form.

    Each pair ``(G_i(x_t), H_i(x_t))`` is projected onto the union of the two
    half-axes; ties keep the ``G`` branch.
    """
    X = np.array(problem.reshape_x(X).ravel())
    vals = evaluate_values(problem, X)
    Gp = np.maximum(vals.G, 0.0)
    Hp = np.maximum(vals.H, 0.0)
    # squared distance to (Gp, 0) versus (0, Hp)
    dist_y = (vals.G - Gp) ** 2 + vals.H ** 2
    dist_z = vals.G ** 2 + (vals.H - Hp) ** 2
    keep_y = dist_y <= dist_z
    Y = np.where(keep_y, Gp, 0.0)
    Z = np.where(keep_y, 0.0, Hp)
    return VerticalState(X, Y.ravel(), Z.ravel())


# ---------------------------------------------------------------------------
# augmented Lagrangian objective


def _shifted(problem, vals, w, m):
    hbar = hbar_values(problem, vals, w)
    K = m.kappa.reshape(problem.horizon, problem.n_hbar)
    eq_res = hbar + K / m.rho_h
    ineq_res = np.maximum(vals.g + m.mu.reshape(problem.horizon, problem.n_g) / m.rho_g, 0.0)
    return eq_res, ineq_res


def _phi_from(problem, vals, w, m) -> float:
    eq_res, ineq_res = _shifted(problem, vals, w, m)
    return float(
        0.5 * np.sum(vals.r * vals.r)
        + 0.5 * m.rho_h * np.sum(eq_res * eq_res)
        + 0.5 * m.rho_g * np.sum(ineq_res * ineq_res)
    )


def eval_phi(problem: MpccProblem, w: VerticalState, m: MultiplierState) -> float:
    """Augmented-Lagrangian subproblem objective ``Phi(X, Y, Z)``."""
    _check_state(problem, w)
    _check_multipliers(problem, m)
    return _phi_from(problem, evaluate_values(problem, w.X), w, m)


def _stack(problem, vals, jac: _Jacobians, w, m):
    """Per-step Gauss-Newton residuals and Jacobians.

    Returns ``(s, C, N, eq_res)`` with residual rows ``s[t] = [r; sqrt(rho_h) eq_res;
    sqrt(rho_g) ineq_res]``, their derivative ``C[t]`` in ``x_t`` and ``N[t]``, the
    derivative of the dynamics rows of ``s[t]`` in ``x_{t+1}``.
    """
    eq_res, ineq_res = _shifted(problem, vals, w, m)
    sh, sg = np.sqrt(m.rho_h), np.sqrt(m.rho_g)
    active = ineq_res > 0.0
    s = np.concatenate([vals.r, sh * eq_res, sg * ineq_res], axis=1)
    C = np.concatenate(
        [jac.r, sh * jac.h_cur, sh * jac.G, sh * jac.H, sg * (jac.g * active[:, :, None])], axis=1
    )
    return s, C, sh * jac.h_next, eq_res


def _grad_from_stack(problem, s, C, N) -> np.ndarray:
    gx = np.matmul(s[:, None, :], C)[:, 0, :]
    if problem.n_h and problem.horizon > 1:
        lo = problem.n_r
        sh = s[:-1, None, lo:lo + problem.n_h]
        gx[1:] += np.matmul(sh, N[:-1])[:, 0, :]
    return gx.ravel()


def eval_phi_gradient(problem: MpccProblem, w: VerticalState, m: MultiplierState) -> np.ndarray:
    """Exact gradient of ``Phi`` over the stacked ``(X, Y, Z)``."""
    _check_state(problem, w)
    _check_multipliers(problem, m)
    vals = evaluate_values(problem, w.X)
    jac = evaluate_jacobians(problem, w.X)
    s, C, N, eq_res = _stack(problem, vals, jac, w, m)
    gx = _grad_from_stack(problem, s, C, N)
    nh, nc = problem.n_h, problem.n_c
    gy = -m.rho_h * eq_res[:, nh:nh + nc].ravel()
    gz = -m.rho_h * eq_res[:, nh + nc:].ravel()
    return np.concatenate([gx, gy, gz])


# ---------------------------------------------------------------------------
# Gauss-Newton system


@dataclass
class GNBlocks:
    """Normal-equation blocks of the Gauss-Newton stack at fixed ``(Y, Z)``.

    ``diag[t]`` and ``upper[t]`` are the ``(t, t)`` and ``(t, t+1)`` blocks of
    ``J'J``; ``grad`` is ``J's`` which equals the X-block of the gradient of Phi.
    """

    phi: float
    grad: np.ndarray
    diag: np.ndarray
    upper: np.ndarray


def gn_blocks(problem: MpccProblem, w: VerticalState, m: MultiplierState) -> GNBlocks:
    vals = evaluate_values(problem, w.X)
    jac = evaluate_jacobians(problem, w.X)
    s, C, N, _ = _stack(problem, vals, jac, w, m)
    Ct = C.transpose(0, 2, 1)
    diag = np.matmul(Ct, C)
    upper = np.zeros((problem.horizon - 1, problem.n_x, problem.n_x))
    if problem.n_h and problem.horizon > 1:
        lo = problem.n_r
        Ch = C[:-1, lo:lo + problem.n_h]
        diag[1:] += np.matmul(N[:-1].transpose(0, 2, 1), N[:-1])
        upper = np.matmul(Ch.transpose(0, 2, 1), N[:-1])
    grad = _grad_from_stack(problem, s, C, N)
    return GNBlocks(0.5 * float(np.sum(s * s)), grad, diag, upper)


def eval_gn_system(problem: MpccProblem, w: VerticalState, m: MultiplierState):
    """Stacked residual vector and sparse Jacobian over ``X`` with ``(Y, Z)`` fixed.

    Stack per step ``t``: ``[r_t; sqrt(rho_h)(hbar_t + kappa_t/rho_h);
    sqrt(rho_g)(g_t + mu_t/rho_g)_+]``.  Inequality rows whose shifted value is
    not strictly positive contribute a zero residual and a zero Jacobian row.
    """
    _check_state(problem, w)
    _check_multipliers(problem, m)
    vals = evaluate_values(problem, w.X)
    jac = evaluate_jacobians(problem, w.X)
    T, n = problem.horizon, problem.n_x
    res, cur, N, _ = _stack(problem, vals, jac, w, m)
    nxt = np.zeros_like(cur)
    nxt[:, problem.n_r:problem.n_r + problem.n_h] = N
    rows = res.shape[1]

    row_idx = np.arange(T * rows).reshape(T, rows)
    ii = np.broadcast_to(row_idx[:, :, None], (T, rows, n))
    jj_cur = np.broadcast_to((np.arange(T)[:, None] * n + np.arange(n))[:, None, :], (T, rows, n))
    data = [cur.ravel()]
    ri = [ii.ravel()]
    ci = [jj_cur.ravel()]
    if T > 1 and problem.n_h:
        data.append(nxt[:-1].ravel())
        ri.append(ii[:-1].ravel())
        ci.append((jj_cur[:-1] + n).ravel())
    J = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(T * rows, T * n)
    )
    J.eliminate_zeros()
    return res.ravel(), J


# ---------------------------------------------------------------------------
# feasibility


def check_feasibility(problem: MpccProblem, w: VerticalState) -> FeasibilityReport:
    """Max-norm violations of the vertical equalities, inequalities and complementarity."""
    vals = evaluate_values(problem, w.X)
    hbar = hbar_values(problem, vals, w)
    eq_inf = float(np.max(np.abs(hbar))) if hbar.size else 0.0
    ineq_inf = float(np.max(np.maximum(vals.g, 0.0))) if vals.g.size else 0.0
    return FeasibilityReport(eq_inf, ineq_inf, complementarity_violation(vals.G, vals.H))


def complementarity_violation(G: np.ndarray, H: np.ndarray) -> float:
    if G.size == 0:
        return 0.0
    return float(max(np.max(np.abs(G * H)), np.max(np.maximum(-G, 0.0)), np.max(np.maximum(-H, 0.0))))


def original_feasibility(problem: MpccProblem, X) -> FeasibilityReport:
    """Violations of the original MPCC recomputed from ``X`` alone (no slacks)."""
    vals = evaluate_values(problem, X)
    eq_inf = float(np.max(np.abs(vals.h))) if vals.h.size else 0.0
    ineq_inf = float(np.max(np.maximum(vals.g, 0.0))) if vals.g.size else 0.0
    return FeasibilityReport(eq_inf, ineq_inf, complementarity_violation(vals.G, vals.H))


def check_jacobians(problem: MpccProblem, X, step: float = 1e-6) -> float:
    """Largest relative mismatch between analytic and central-difference Jacobians."""
    X = np.asarray(X, dtype=float).ravel()
    jac = evaluate_jacobians(problem, X)
    T, n = problem.horizon, problem.n_x
    worst = 0.0
    blocks = [("r", jac.r), ("g", jac.g), ("G", jac.G), ("H", jac.H)]
    for k in range(n):
        e = np.zeros((T, n))
        e[:, k] = step
        # perturb column k at every step at once; per-step callbacks only see x_t
        vp = evaluate_values(problem, X + e.ravel())
        vm = evaluate_values(problem, X - e.ravel())
        for name, J in blocks:
            fd = (getattr(vp, name) - getattr(vm, name)) / (2 * step)
            worst = max(worst, _rel(J[:, :, k], fd))
    if problem.n_h:
        for k in range(n):
            for shift, J in ((0, jac.h_cur), (1, jac.h_next)):
                for parity in (0, 1):
                    # perturb even or odd steps only so that h_t sees one perturbed argument
                    e = np.zeros((T, n))
                    steps = np.arange(T)
                    sel = steps[(steps % 2) == parity]
                    e[sel, k] = step
                    vp = evaluate_values(problem, X + e.ravel()).h
                    vm = evaluate_values(problem, X - e.ravel()).h
                    fd = (vp - vm) / (2 * step)
                    rows = steps[((steps + shift) % 2) == parity]
                    if shift:
                        rows = rows[rows < T - 1]
                    worst = max(worst, _rel(J[rows, :, k], fd[rows]))
    return worst


def _rel(a, b) -> float:
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(a))))
