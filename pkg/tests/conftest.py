from __future__ import annotations

import numpy as np
import pytest

from mpcc_aula import MpccProblem, MultiplierState, VerticalState


def synthetic_problem(T: int = 2, n_c: int = 3, with_ineq: bool = True) -> MpccProblem:
    """Small nonlinear MPCC with coupled dynamics, used where benchmark scale is not needed."""
    n = 3
    A = np.array([[1.0, -0.5, 0.2], [0.3, 1.0, -0.7], [-0.4, 0.6, 1.0], [0.5, 0.5, -0.5]])[:n_c]
    B = np.array([[0.2, 1.0, 0.1], [-0.6, 0.3, 1.0], [1.0, -0.2, 0.4], [0.1, -0.9, 0.3]])[:n_c]

    def r(X2):
        x0, x1, x2 = X2.T
        return np.stack([np.sin(x0) + x1 ** 2, x2 - 0.5 * x0 * x1], axis=1)

    def r_jac(X2):
        x0, x1, x2 = X2.T
        J = np.zeros((X2.shape[0], 2, n))
        J[:, 0, 0] = np.cos(x0)
        J[:, 0, 1] = 2 * x1
        J[:, 1, 0] = -0.5 * x1
        J[:, 1, 1] = -0.5 * x0
        J[:, 1, 2] = 1.0
        return J

    def h(X2):
        Xn = np.concatenate([X2[1:], X2[-1:]], axis=0)
        return (Xn[:, :1] - X2[:, :1] - 0.1 * np.sin(X2[:, 1:2]))

    def h_jac(X2):
        T_ = X2.shape[0]
        A_ = np.zeros((T_, 1, n))
        A_[:, 0, 0] = -1.0
        A_[:, 0, 1] = -0.1 * np.cos(X2[:, 1])
        B_ = np.zeros((T_, 1, n))
        B_[:, 0, 0] = 1.0
        return A_, B_

    def g(X2):
        return (X2[:, 0] ** 2 + X2[:, 1] - 1.0)[:, None]

    def g_jac(X2):
        J = np.zeros((X2.shape[0], 1, n))
        J[:, 0, 0] = 2 * X2[:, 0]
        J[:, 0, 1] = 1.0
        return J

    def G(X2):
        return X2 @ A.T + 0.1 * X2[:, :1] ** 2

    def G_jac(X2):
        J = np.broadcast_to(A, (X2.shape[0],) + A.shape).copy()
        J[:, :, 0] += 0.2 * X2[:, :1]
        return J

    def H(X2):
        return X2 @ B.T

    def H_jac(X2):
        return np.broadcast_to(B, (X2.shape[0],) + B.shape)

    eq_mask = np.ones((T, 1), dtype=bool)
    eq_mask[-1] = False
    kw = dict(g=g, g_jac=g_jac) if with_ineq else {}
    return MpccProblem(horizon=T, n_x=n, n_c=n_c, n_r=2, n_h=1, n_g=1 if with_ineq else 0,
                       r=r, r_jac=r_jac, h=h, h_jac=h_jac, G=G, G_jac=G_jac, H=H, H_jac=H_jac,
                       eq_mask=eq_mask, name="synthetic", **kw)


def random_state(problem: MpccProblem, rng, scale: float = 1.0) -> VerticalState:
    X = rng.normal(scale=scale, size=problem.size_x)
    Y = np.abs(rng.normal(size=problem.size_c))
    Z = np.abs(rng.normal(size=problem.size_c))
    return VerticalState(X, Y, Z)


def random_multipliers(problem: MpccProblem, rng, rho=None) -> MultiplierState:
    T = problem.horizon
    rho_h, rho_g = rho if rho is not None else rng.uniform(0.5, 20.0, size=2)
    return MultiplierState(rng.normal(size=T * problem.n_hbar), np.abs(rng.normal(size=T * problem.n_g)),
                           float(rho_h), float(rho_g))


def fd_gradient(fun, v, step: float = 1e-6) -> np.ndarray:
    out = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = step
        out[i] = (fun(v + e) - fun(v - e)) / (2 * step)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem():
    return synthetic_problem()


# one pass/fail line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
