import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcc_aula import (
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
from mpcc_aula.problem import check_jacobians, original_feasibility

from conftest import fd_gradient, random_multipliers, random_state, synthetic_problem


def pair_problem(G_val, H_val, g_vals=(), h_val=None):
    """T = 1 instance with constant callbacks, for hand-checked examples."""
    G_val, H_val = np.atleast_1d(G_val).astype(float), np.atleast_1d(H_val).astype(float)
    nc, ng = G_val.size, len(g_vals)
    const = lambda v: (lambda X2: np.tile(np.asarray(v, float), (X2.shape[0], 1)))
    zero_jac = lambda rows: (lambda X2: np.zeros((X2.shape[0], rows, 1)))
    kw = {}
    if ng:
        kw.update(g=const(g_vals), g_jac=zero_jac(ng))
    if h_val is not None:
        kw.update(h=const([h_val]), h_jac=lambda X2: (np.zeros((1, 1, 1)), np.zeros((1, 1, 1))))
    return MpccProblem(horizon=1, n_x=1, n_c=nc, n_r=1, n_h=0 if h_val is None else 1, n_g=ng,
                       r=lambda X2: np.zeros((X2.shape[0], 1)), r_jac=zero_jac(1),
                       G=const(G_val), G_jac=zero_jac(nc), H=const(H_val), H_jac=zero_jac(nc), **kw)


@pytest.mark.parametrize("G,H,expected", [((2.0,), (3.0,), (0.0, 3.0)), ((0.0,), (0.0,), (0.0, 0.0)),
                                          ((-1.0,), (4.0,), (0.0, 4.0)), ((3.0,), (3.0,), (3.0, 0.0))])
def test_assemble_vertical_projects_onto_cone_union(G, H, expected):
    w = assemble_vertical(pair_problem(G, H), np.zeros(1))
    assert (w.Y[0], w.Z[0]) == expected


def test_assemble_vertical_rejects_wrong_length(small_problem):
    with pytest.raises(RejectedInputError):
        assemble_vertical(small_problem, np.zeros(small_problem.size_x + 1))


def test_phi_zero_case():
    p = pair_problem(0.0, 0.0)
    w = VerticalState(np.zeros(1), np.zeros(1), np.zeros(1))
    assert eval_phi(p, w, MultiplierState.zeros(p)) == 0.0


def test_phi_single_equality_row():
    p = pair_problem(np.zeros(0), np.zeros(0), h_val=0.2)
    w = VerticalState(np.zeros(1), np.zeros(0), np.zeros(0))
    m = MultiplierState(np.zeros(1), np.zeros(0), 10.0, 1.0)
    assert eval_phi(p, w, m) == pytest.approx(0.2, rel=1e-15)


def test_phi_inactive_shifted_inequality():
    p = pair_problem(np.zeros(0), np.zeros(0), g_vals=(-1.0,))
    w = VerticalState(np.zeros(1), np.zeros(0), np.zeros(0))
    assert eval_phi(p, w, MultiplierState(np.zeros(0), np.array([0.5]), 1.0, 1.0)) == 0.0


def test_slack_gradient_block():
    p = pair_problem(1.0, 0.0)
    w = VerticalState(np.zeros(1), np.ones(1), np.zeros(1))
    grad = eval_phi_gradient(p, w, MultiplierState.zeros(p, 3.0))
    assert grad[1] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_phi_rejects_non_finite_with_location():
    p = synthetic_problem()
    X = np.zeros(p.size_x)
    X[4] = np.inf
    w = VerticalState(X, np.zeros(p.size_c), np.zeros(p.size_c))
    with pytest.raises(NumericalDomainError) as err:
        eval_phi(p, w, MultiplierState.zeros(p))
    assert err.value.t == 1


def test_gradient_matches_finite_differences(rng):
    p = synthetic_problem(T=4, n_c=3)
    for _ in range(5):
        w = random_state(p, rng)
        m = random_multipliers(p, rng)
        nx, nc = p.size_x, p.size_c

        def phi(v):
            return eval_phi(p, VerticalState(v[:nx], v[nx:nx + nc], v[nx + nc:]), m)

        grad = eval_phi_gradient(p, w, m)
        fd = fd_gradient(phi, w.stacked())
        assert np.max(np.abs(grad - fd)) / (1 + np.max(np.abs(grad))) <= 1e-6


def test_gradient_zero_at_minimiser_of_quadratic():
    c = np.array([0.3, -1.2])
    p = MpccProblem(horizon=1, n_x=2, n_c=0, n_r=2, n_h=0, n_g=0,
                    r=lambda X2: X2 - c, r_jac=lambda X2: np.eye(2)[None])
    w = VerticalState(c.copy(), np.zeros(0), np.zeros(0))
    assert np.max(np.abs(eval_phi_gradient(p, w, MultiplierState.zeros(p)))) <= 1e-10


def test_gn_stack_reproduces_phi_and_gradient(rng):
    p = synthetic_problem(T=5, n_c=3)
    for _ in range(10):
        w = random_state(p, rng)
        m = random_multipliers(p, rng)
        res, J = eval_gn_system(p, w, m)
        phi = eval_phi(p, w, m)
        assert 0.5 * res @ res == pytest.approx(phi, rel=1e-12)
        gx = eval_phi_gradient(p, w, m)[:p.size_x]
        assert np.max(np.abs(J.T @ res - gx)) <= 1e-8


def test_gn_jacobian_is_block_bidiagonal(rng):
    p = synthetic_problem(T=4, n_c=3)
    _, J = eval_gn_system(p, random_state(p, rng), random_multipliers(p, rng))
    rows = J.shape[0] // p.horizon
    dense = J.toarray()
    for t in range(p.horizon):
        block_row = dense[t * rows:(t + 1) * rows]
        cols = np.nonzero(np.any(block_row != 0, axis=0))[0] // p.n_x
        assert set(cols) <= {t, t + 1}


def test_gn_without_constraints_is_residual_jacobian():
    p = MpccProblem(horizon=1, n_x=2, n_c=0, n_r=2, n_h=0, n_g=0,
                    r=lambda X2: np.stack([X2[:, 0] ** 2, X2[:, 1]], axis=1),
                    r_jac=lambda X2: np.array([[[2 * X2[0, 0], 0.0], [0.0, 1.0]]]))
    w = VerticalState(np.array([1.5, -2.0]), np.zeros(0), np.zeros(0))
    _, J = eval_gn_system(p, w, MultiplierState.zeros(p))
    np.testing.assert_array_equal(J.toarray(), [[3.0, 0.0], [0.0, 1.0]])


def test_feasibility_examples():
    p = pair_problem(1e-3, 1e-3, g_vals=(0.1, -5.0))
    w = VerticalState(np.zeros(1), np.array([1e-3]), np.array([1e-3]))
    rep = check_feasibility(p, w)
    assert rep.comp_inf == pytest.approx(1e-6)
    assert rep.ineq_inf == pytest.approx(0.1)
    assert rep.eq_inf == 0.0


def test_feasible_point_has_zero_residuals():
    p = pair_problem(0.0, 2.0)
    w = assemble_vertical(p, np.zeros(1))
    rep = check_feasibility(p, w)
    assert rep.max() == 0.0
    assert original_feasibility(p, w.X).comp_inf == 0.0


def test_jacobian_callbacks_agree_with_fd(rng):
    p = synthetic_problem(T=5, n_c=3)
    assert check_jacobians(p, rng.normal(size=p.size_x)) <= 1e-5


def test_evaluation_is_deterministic(rng):
    p = synthetic_problem(T=6, n_c=3)
    w, m = random_state(p, rng), random_multipliers(p, rng)
    assert eval_phi(p, w, m) == eval_phi(p, w.copy(), m.copy())
    np.testing.assert_array_equal(eval_phi_gradient(p, w, m), eval_phi_gradient(p, w, m))


@settings(max_examples=60, deadline=None)
@given(G=st.floats(-5, 5), H=st.floats(-5, 5))
def test_vertical_lift_is_complementary(G, H):
    w = assemble_vertical(pair_problem(G, H), np.zeros(1))
    assert w.Y[0] >= 0 and w.Z[0] >= 0 and w.Y[0] * w.Z[0] == 0.0
    # the kept branch is the nearer one
    d_kept = (G - w.Y[0]) ** 2 + (H - w.Z[0]) ** 2
    d_other = min((G - max(G, 0)) ** 2 + H ** 2, G ** 2 + (H - max(H, 0)) ** 2)
    assert d_kept <= d_other + 1e-12
