import numpy as np
import pytest

from mpcc_aula import AulaConfig, BcdConfig, MpccProblem, aula_solve
from mpcc_aula.benchmarks.spec import load_task_spec
from mpcc_aula.benchmarks.tasks import build_toy_2d
from mpcc_aula.penalty import PenaltyConfig, penalized_problem, penalty_solve
from mpcc_aula.problem import check_jacobians, evaluate_values

from conftest import synthetic_problem


def test_toy_solutions_agree():
    spec = load_task_spec("toy_2d")
    p = build_toy_2d()
    ours = aula_solve(p, None, spec.aula_config(), spec.bcd_config())
    base = penalty_solve(p, None, spec.penalty_config())
    assert ours.converged and base.converged
    np.testing.assert_allclose(base.state.X, ours.state.X, atol=1e-6)


def test_penalized_rows(rng):
    p = synthetic_problem(T=3, n_c=3)
    q = penalized_problem(p, 100.0)
    X = rng.normal(size=p.size_x)
    v, vq = evaluate_values(p, X), evaluate_values(q, X)
    np.testing.assert_allclose(vq.r[:, p.n_r:], 10.0 * v.G * v.H, rtol=1e-14)
    np.testing.assert_array_equal(vq.g[:, p.n_g:], np.concatenate([-v.G, -v.H], axis=1))
    assert q.n_c == 0 and q.n_g == p.n_g + 2 * p.n_c


def test_penalized_jacobians(rng):
    q = penalized_problem(synthetic_problem(T=4, n_c=3), 50.0)
    assert check_jacobians(q, rng.normal(size=q.size_x)) <= 1e-5


def test_unconstrained_problem_matches_aula_exactly():
    c = np.array([0.4, -0.9, 1.3])
    p = MpccProblem(horizon=1, n_x=3, n_c=0, n_r=3, n_h=0, n_g=0,
                    r=lambda X2: np.sin(X2) - c * 0.5, r_jac=lambda X2: np.diag(np.cos(X2[0]))[None])
    cfg, bcd = AulaConfig(), BcdConfig()
    a = aula_solve(p, None, cfg, bcd)
    b = penalty_solve(p, None, PenaltyConfig(1e4, cfg, bcd))
    np.testing.assert_array_equal(a.state.X, b.state.X)
    assert a.total_sweeps == b.total_sweeps


def test_penalty_reports_original_feasibility():
    spec = load_task_spec("toy_2d")
    rep = penalty_solve(build_toy_2d(), np.array([2.0, 2.0]), spec.penalty_config())
    assert rep.feasibility.comp_inf == rep.original_feasibility.comp_inf <= 1e-8


def test_rho_c_must_be_positive():
    with pytest.raises(ValueError):
        PenaltyConfig(0.0)
