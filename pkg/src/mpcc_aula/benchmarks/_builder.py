"""Shared assembly of trajectory MPCCs with per-step variables ``x_t = (s_t, u_t)``.

Equality rows per step are ``[s_{t+1} - F(s_t, u_t); s_0 - start; extra]``;
dynamics rows are masked at the last step and the initial-condition rows
everywhere but ``t = 0``.  Complementarity and inequality rows are affine in
``x_t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..problem import MpccProblem

# step(S, U, jac) -> (F, dF/dS, dF/dU); the derivatives are None when jac is False, with shapes
# (T, n_s), (T, n_s, n_s), (T, n_s, n_u)
StepFn = Callable[[np.ndarray, np.ndarray], tuple]
# extra(X, X_next) -> (values (T, k), d/dx_t (T, k, n), d/dx_{t+1} (T, k, n))
ExtraFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class Affine:
    """Rows ``A x_t + b`` shared by every step."""

    A: np.ndarray
    b: np.ndarray

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def values(self, X2):
        return X2 @ self.A.T + self.b

    def jac(self, T):
        return np.broadcast_to(self.A, (T,) + self.A.shape)


def _next(X2):
    return np.concatenate([X2[1:], X2[-1:]], axis=0)


def build_trajectory_problem(*, name: str, T: int, n_s: int, n_u: int, step: StepFn,
                             start, goal, stage_weight: float, final_weight: float,
                             pairs: tuple[Affine, Affine], ineq: Optional[Affine] = None,
                             extra: Optional[ExtraFn] = None, n_extra: int = 0,
                             extra_uses_next: bool = False, meta: Optional[dict] = None) -> MpccProblem:
    n = n_s + n_u
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    ws = np.sqrt(2.0 * stage_weight)
    wf = np.sqrt(2.0 * final_weight)

    n_r = n_u + n_s
    r_mask = np.zeros((T, n_r), dtype=bool)
    r_mask[:, :n_u] = True
    r_mask[-1, n_u:] = True
    Jr = np.zeros((n_r, n))
    Jr[:n_u, n_s:] = ws * np.eye(n_u)
    Jr[n_u:, :n_s] = wf * np.eye(n_s)
    Jr_all = np.broadcast_to(Jr, (T, n_r, n))

    def r(X2):
        return np.concatenate([ws * X2[:, n_s:], wf * (X2[:, :n_s] - goal)], axis=1)

    def r_jac(X2):
        return Jr_all

    n_h = 2 * n_s + n_extra
    eq_mask = np.ones((T, n_h), dtype=bool)
    eq_mask[-1, :n_s] = False
    eq_mask[1:, n_s:2 * n_s] = False
    if extra_uses_next:
        eq_mask[-1, 2 * n_s:] = False
    init_cur = np.zeros((n_s, n))
    init_cur[:, :n_s] = np.eye(n_s)
    dyn_next = np.zeros((n_s, n))
    dyn_next[:, :n_s] = np.eye(n_s)

    def h(X2):
        F = step(X2[:, :n_s], X2[:, n_s:], False)[0]
        parts = [_next(X2)[:, :n_s] - F, X2[:, :n_s] - start]
        if n_extra:
            parts.append(extra(X2, _next(X2))[0])
        return np.concatenate(parts, axis=1)

    def h_jac(X2):
        _, dS, dU = step(X2[:, :n_s], X2[:, n_s:], True)
        A = np.zeros((T, n_h, n))
        B = np.zeros((T, n_h, n))
        A[:, :n_s, :n_s] = -dS
        A[:, :n_s, n_s:] = -dU
        A[:, n_s:2 * n_s] = init_cur
        B[:, :n_s] = dyn_next
        if n_extra:
            _, ec, en = extra(X2, _next(X2))
            A[:, 2 * n_s:] = ec
            B[:, 2 * n_s:] = en
        return A, B

    G_aff, H_aff = pairs
    kw = {}
    if ineq is not None and ineq.rows:
        kw.update(g=ineq.values, g_jac=lambda X2: ineq.jac(T))
    return MpccProblem(
        horizon=T,
        n_x=n,
        n_c=G_aff.rows,
        n_r=n_r,
        n_h=n_h,
        n_g=ineq.rows if ineq is not None else 0,
        r=r,
        r_jac=r_jac,
        h=h,
        h_jac=h_jac,
        G=G_aff.values,
        G_jac=lambda X2: G_aff.jac(T),
        H=H_aff.values,
        H_jac=lambda X2: H_aff.jac(T),
        eq_mask=eq_mask,
        r_mask=r_mask,
        n_e=n_extra,
        name=name,
        meta=dict(meta or {}, n_s=n_s, n_u=n_u, start=start, goal=goal),
        **kw,
    )


def planar_step(D: np.ndarray, dt: float, wrench: Callable):
    """Quasi-static planar step: ``s' = s + dt [R(theta) V_xy; V_w]`` with ``V = D W``.

    ``wrench(U, jac) -> (W (T, 3), dW/dU (T, 3, n_u) or None)`` gives the body-frame wrench.
    """

    def step(S, U, jac=True):
        W, dW = wrench(U, jac)
        V = W @ D.T
        c, s = np.cos(S[:, 2]), np.sin(S[:, 2])
        T = S.shape[0]
        F = S.copy()
        F[:, 0] += dt * (c * V[:, 0] - s * V[:, 1])
        F[:, 1] += dt * (s * V[:, 0] + c * V[:, 1])
        F[:, 2] += dt * V[:, 2]
        if not jac:
            return F, None, None
        dV = np.matmul(D, dW)
        dS = np.broadcast_to(np.eye(3), (T, 3, 3)).copy()
        dS[:, 0, 2] += dt * (-s * V[:, 0] - c * V[:, 1])
        dS[:, 1, 2] += dt * (c * V[:, 0] - s * V[:, 1])
        dU = np.empty_like(dV)
        dU[:, 0] = dt * (c[:, None] * dV[:, 0] - s[:, None] * dV[:, 1])
        dU[:, 1] = dt * (s[:, None] * dV[:, 0] + c[:, None] * dV[:, 1])
        dU[:, 2] = dt * dV[:, 2]
        return F, dS, dU

    return step


def limit_surface(mass: float, gravity: float, support_friction: float, char_radius: float) -> np.ndarray:
    """Ellipsoidal limit-surface mobility ``diag(1, 1, 1/c^2) / (mu m g)``."""
    return np.diag([1.0, 1.0, 1.0 / char_radius ** 2]) / (support_friction * mass * gravity)


def selection(n: int, index_sets, offset: int = 0) -> np.ndarray:
    """Rows summing the listed variable indices (shifted by ``offset``)."""
    A = np.zeros((len(index_sets), n))
    for row, idx in enumerate(index_sets):
        A[row, [offset + i for i in idx]] = 1.0
    return A
