"""Problem builders for Push Box, Push T, Cart Transport and the 2-D toy."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..problem import MpccProblem
from ._builder import Affine, build_trajectory_problem, limit_surface, planar_step, selection
from .spec import ConfigurationError, TaskSpec


@dataclass(frozen=True)
class GoalSpec:
    """Start and goal state of one trial; ``seed`` and ``index`` identify the draw."""

    start: np.ndarray
    goal: np.ndarray
    seed: int = 0
    index: int = 0


def _require(spec: TaskSpec, task: str):
    if spec.task != task:
        raise ConfigurationError(f"expected a {task} spec, got {spec.task}")


def _cross(p, v):
    return p[0] * v[1] - p[1] * v[0]


def _columns(points, directions) -> np.ndarray:
    """Body wrench ``(f_x, f_y, tau)`` of a unit force along each direction at each point."""
    return np.array([[d[0], d[1], _cross(p, d)] for p, d in zip(points, directions)]).T


# ---------------------------------------------------------------------------
# Push Box


def push_box_contacts(spec: TaskSpec):
    """Contact points and inward normals in the body frame (box centred at the origin)."""
    a, b = spec.physics["length_a"], spec.physics["length_b"]
    points = np.array([[-a / 2, 0.0], [a / 2, 0.0], [0.0, -b / 2], [-a / 4, b / 2], [a / 4, b / 2]])
    normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.0, -1.0]])
    return points, normals


def _char_radius(spec: TaskSpec, half_diag: float) -> float:
    return spec.model["char_radius_scale"] * half_diag


def build_push_box(spec: TaskSpec, goal: GoalSpec) -> MpccProblem:
    """Quasi-static box pushing with five point contacts and one shared friction angle.

    Controls are ``(f_1..f_5, phi)``; contact ``k`` applies ``f_k (n_k + mu tanh(phi) t_k)``
    so the tangential part stays inside the friction cone.  The ten pairs
    ``f_j _|_ f_k`` keep every normal force nonnegative with at most one contact active.
    """
    _require(spec, "push_box")
    ph, md = spec.physics, spec.model
    points, normals = push_box_contacts(spec)
    tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
    N = _columns(points, normals)
    Tm = _columns(points, tangents)
    mu_p = md["pusher_friction"]
    half_diag = 0.5 * np.hypot(ph["length_a"], ph["length_b"])
    D = limit_surface(ph["mass"], ph["gravity"], md["support_friction"], _char_radius(spec, half_diag))
    n_f = points.shape[0]

    def wrench(U, jac=True):
        f, q = U[:, :n_f], np.tanh(U[:, n_f])
        ft = f @ Tm.T
        W = f @ N.T + mu_p * q[:, None] * ft
        if not jac:
            return W, None
        dW = np.empty((U.shape[0], 3, n_f + 1))
        dW[:, :, :n_f] = N + mu_p * q[:, None, None] * Tm
        dW[:, :, n_f] = mu_p * (1.0 - q * q)[:, None] * ft
        return W, dW

    n_s, n_u = 3, n_f + 1
    pairs_idx = list(combinations(range(n_f), 2))
    n = n_s + n_u
    G = Affine(selection(n, [[j] for j, _ in pairs_idx], offset=n_s), np.zeros(len(pairs_idx)))
    H = Affine(selection(n, [[k] for _, k in pairs_idx], offset=n_s), np.zeros(len(pairs_idx)))
    return build_trajectory_problem(
        name="push_box",
        T=spec.horizon,
        n_s=n_s,
        n_u=n_u,
        step=planar_step(D, spec.dt, wrench),
        start=goal.start,
        goal=goal.goal,
        stage_weight=spec.stage_weight,
        final_weight=spec.final_weight,
        pairs=(G, H),
        meta={"task": "push_box", "n_force": n_f, "mobility": D, "normals": normals,
              "tangents": tangents, "pusher_friction": mu_p},
    )


# ---------------------------------------------------------------------------
# Push T


def push_t_contacts(spec: TaskSpec):
    """Contact candidates of the T block grouped by push direction.

    Returns ``(groups, candidates)`` where each candidate is
    ``(group, point, normal, two_edge)`` in the centroid frame.  The stem spans
    ``y in [0, 3l]``, the bar ``y in [3l, 4l]``.
    """
    l = spec.physics["length_l"]
    yc = (4 * 3.5 + 3 * 1.5) / 7 * l
    cands = []
    for x in (-1.6, -0.8, 0.0, 0.8, 1.6):
        cands.append((0, (x * l, 4 * l), (0.0, -1.0), x == 0.0))
    for y in (3.25, 3.75):
        cands.append((1, (-2 * l, y * l), (1.0, 0.0), False))
    for y in (0.75, 2.25):
        cands.append((1, (-0.5 * l, y * l), (1.0, 0.0), False))
    cands.append((2, (2 * l, 3.5 * l), (-1.0, 0.0), False))
    for y in (0.75, 2.25):
        cands.append((2, (0.5 * l, y * l), (-1.0, 0.0), False))
    for x in (-0.25, 0.25):
        cands.append((3, (x * l, 0.0), (0.0, 1.0), True))
    cands = [(g, np.array([p[0], p[1] - yc]), np.array(d), e) for g, p, d, e in cands]
    return 4, cands


def build_push_t(spec: TaskSpec, goal: GoalSpec) -> MpccProblem:
    """Quasi-static T pushing with grouped contact candidates and mode exclusivity.

    Controls are 17 nonnegative force coefficients (normal-only candidates or
    the two friction-cone edges of a frictional candidate), the body wrench
    ``W`` (3) and the group activities ``a`` (4).  Seven equalities tie ``W``
    and ``a`` to the coefficients.  Pairs: 6 between groups, 17 between each
    coefficient and the other groups' activity, 20 between candidates of a
    group.  Four inequality rows keep the block inside the workspace.
    """
    _require(spec, "push_t")
    ph, md = spec.physics, spec.model
    mu_p = md["pusher_friction"]
    n_groups, cands = push_t_contacts(spec)
    points, dirs, coef_group, cand_coefs = [], [], [], []
    for g, p, d, two_edge in cands:
        t = np.array([-d[1], d[0]])
        edges = (d + mu_p * t, d - mu_p * t) if two_edge else (d,)
        idx = []
        for e in edges:
            idx.append(len(dirs))
            points.append(p)
            dirs.append(e)
            coef_group.append(g)
        cand_coefs.append((g, idx))
    Wmat = _columns(points, dirs)
    n_coef = len(dirs)
    n_s = 3
    n_u = n_coef + 3 + n_groups
    n = n_s + n_u
    o_c, o_w, o_a = n_s, n_s + n_coef, n_s + n_coef + 3

    l = ph["length_l"]
    # bounding radius of the T about its centroid
    half_diag = np.max(np.hypot(*np.array([p for _, p, _, _ in cands]).T))
    D = limit_surface(ph["mass"], ph["gravity"], md["support_friction"], _char_radius(spec, half_diag))

    def wrench(U, jac=True):
        W = U[:, n_coef:n_coef + 3]
        if not jac:
            return W, None
        dW = np.zeros((U.shape[0], 3, n_u))
        dW[:, :, n_coef:n_coef + 3] = np.eye(3)
        return W, dW

    group_sum = selection(n_coef, [[j for j in range(n_coef) if coef_group[j] == g] for g in range(n_groups)])
    E = np.zeros((3 + n_groups, n))
    E[:3, o_w:o_w + 3] = np.eye(3)
    E[:3, o_c:o_c + n_coef] = -Wmat
    E[3:, o_a:o_a + n_groups] = np.eye(n_groups)
    E[3:, o_c:o_c + n_coef] = -group_sum

    def extra(X2, Xn):
        T = X2.shape[0]
        return X2 @ E.T, np.broadcast_to(E, (T,) + E.shape), np.zeros((T,) + E.shape)

    G_rows, H_rows = [], []
    for f, g in combinations(range(n_groups), 2):
        G_rows.append(selection(n, [[f]], offset=o_a)[0])
        H_rows.append(selection(n, [[g]], offset=o_a)[0])
    for j in range(n_coef):
        G_rows.append(selection(n, [[j]], offset=o_c)[0])
        H_rows.append(selection(n, [[g for g in range(n_groups) if g != coef_group[j]]], offset=o_a)[0])
    for g in range(n_groups):
        members = [idx for grp, idx in cand_coefs if grp == g]
        for ia, ib in combinations(members, 2):
            G_rows.append(selection(n, [ia], offset=o_c)[0])
            H_rows.append(selection(n, [ib], offset=o_c)[0])
    n_c = len(G_rows)
    Wk = md["workspace"]
    Ag = np.zeros((4, n))
    Ag[0, 0], Ag[1, 0], Ag[2, 1], Ag[3, 1] = 1.0, -1.0, 1.0, -1.0
    return build_trajectory_problem(
        name="push_t",
        T=spec.horizon,
        n_s=n_s,
        n_u=n_u,
        step=planar_step(D, spec.dt, wrench),
        start=goal.start,
        goal=goal.goal,
        stage_weight=spec.stage_weight,
        final_weight=spec.final_weight,
        pairs=(Affine(np.array(G_rows), np.zeros(n_c)), Affine(np.array(H_rows), np.zeros(n_c))),
        ineq=Affine(Ag, -Wk * np.ones(4)),
        extra=extra,
        n_extra=3 + n_groups,
        meta={
            "task": "push_t",
            "n_coef": n_coef,
            "wrench_columns": Wmat,
            "force_dirs": np.array(dirs),
            "group_of_coef": np.array(coef_group),
            "activity_slice": (n_coef + 3, n_coef + 3 + n_groups),
            "length": l,
        },
    )


# ---------------------------------------------------------------------------
# Cart Transport


def cart_step(spec: TaskSpec):
    """Semi-implicit Euler for load ``x`` and cart ``y`` driven by ``F`` with contact force ``f``."""
    ph = spec.physics
    dt, m1, m2 = spec.dt, ph["mass_load"], ph["mass_cart"]
    dS0 = np.array([
        [1.0, 0.0, dt, 0.0],
        [0.0, 1.0, 0.0, dt],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    # columns: F, f, p, n
    dU0 = np.array([
        [0.0, dt * dt / m1, 0.0, 0.0],
        [dt * dt / m2, -dt * dt / m2, 0.0, 0.0],
        [0.0, dt / m1, 0.0, 0.0],
        [dt / m2, -dt / m2, 0.0, 0.0],
    ])

    def step(S, U, jac=True):
        T = S.shape[0]
        F = S @ dS0.T + U @ dU0.T
        if not jac:
            return F, None, None
        return F, np.broadcast_to(dS0, (T, 4, 4)), np.broadcast_to(dU0, (T, 4, 4))

    return step


def build_cart_transport(spec: TaskSpec, start_goal: GoalSpec) -> MpccProblem:
    """Cart with a payload that sticks or slips under Coulomb friction.

    State ``(x, y, vx, vy)`` (load, cart); controls ``(F, f, p, n)`` with cart
    force ``F``, friction force ``f`` on the load and slip velocity parts
    ``p, n``.  Equality: next relative velocity equals ``p - n``.  Pairs:
    ``p _|_ mu m1 g + f``, ``n _|_ mu m1 g - f``, ``p _|_ n``.
    """
    _require(spec, "cart_transport")
    ph, md = spec.physics, spec.model
    fric = ph["friction"] * ph["mass_load"] * ph["gravity"]
    n_s, n_u = 4, 4
    n = n_s + n_u
    iF, if_, ip, in_ = 4, 5, 6, 7

    E_cur = np.zeros((1, n))
    E_cur[0, ip], E_cur[0, in_] = -1.0, 1.0
    E_next = np.zeros((1, n))
    E_next[0, 2], E_next[0, 3] = 1.0, -1.0

    def extra(X2, Xn):
        T = X2.shape[0]
        vals = Xn @ E_next.T + X2 @ E_cur.T
        return vals, np.broadcast_to(E_cur, (T, 1, n)), np.broadcast_to(E_next, (T, 1, n))

    # row scales leave the feasible set unchanged
    sp_, sc = md.get("slip_pair_scale", 1.0), md.get("friction_pair_scale", 1.0)
    AG = np.zeros((3, n))
    AG[0, ip], AG[1, in_], AG[2, ip] = sp_, sp_, sp_
    AH = np.zeros((3, n))
    AH[0, if_], AH[1, if_], AH[2, in_] = sc, -sc, sp_
    bH = np.array([sc * fric, sc * fric, 0.0])

    Ag = np.zeros((4, n))
    Ag[0, 0], Ag[0, 1] = 1.0, -1.0
    Ag[1, 0], Ag[1, 1] = -1.0, 1.0
    Ag[2, iF], Ag[3, iF] = 1.0, -1.0
    bg = -np.array([ph["length_l"], ph["length_l"], md["force_max"], md["force_max"]])
    return build_trajectory_problem(
        name="cart_transport",
        T=spec.horizon,
        n_s=n_s,
        n_u=n_u,
        step=cart_step(spec),
        start=start_goal.start,
        goal=start_goal.goal,
        stage_weight=spec.stage_weight,
        final_weight=spec.final_weight,
        pairs=(Affine(AG, np.zeros(3)), Affine(AH, bH)),
        ineq=Affine(Ag, bg),
        extra=extra,
        n_extra=1,
        extra_uses_next=True,
        meta={"task": "cart_transport", "friction_bound": fric},
    )


# ---------------------------------------------------------------------------
# toy problem


def build_toy_2d(center=(1.0, 1.0), Q=((2.0, 0.5), (0.5, 1.0))) -> MpccProblem:
    """``min 1/2 (x - c)' Q (x - c)`` subject to ``0 <= x_1 _|_ x_2 >= 0``."""
    c = np.asarray(center, dtype=float)
    L = np.linalg.cholesky(np.asarray(Q, dtype=float)).T
    sel1 = np.array([[[1.0, 0.0]]])
    sel2 = np.array([[[0.0, 1.0]]])
    return MpccProblem(
        horizon=1,
        n_x=2,
        n_c=1,
        n_r=2,
        n_h=0,
        n_g=0,
        r=lambda X2: (X2 - c) @ L.T,
        r_jac=lambda X2: L[None],
        G=lambda X2: X2[:, :1],
        G_jac=lambda X2: sel1,
        H=lambda X2: X2[:, 1:],
        H_jac=lambda X2: sel2,
        name="toy_2d",
        meta={"task": "toy_2d", "center": c, "Q": np.asarray(Q, dtype=float)},
    )


def build_toy_from_spec(spec: TaskSpec) -> MpccProblem:
    _require(spec, "toy_2d")
    cs = spec.cost
    Q = ((cs["q11"], cs["q12"]), (cs["q12"], cs["q22"]))
    return build_toy_2d((cs["center_x"], cs["center_y"]), Q)


# ---------------------------------------------------------------------------
# sampling and dispatch


def sample_goals(spec: TaskSpec, count: int, seed: int) -> list:
    """Deterministic start/goal draws for ``count`` trials."""
    rng = np.random.default_rng(seed)
    gs = spec.goals
    out = []
    for i in range(count):
        if spec.task in ("push_box", "push_t"):
            goal = np.array([rng.uniform(*gs["x_range"]), rng.uniform(*gs["y_range"]),
                             rng.uniform(*gs["theta_range"])])
            out.append(GoalSpec(np.zeros(3), goal, seed, i))
        elif spec.task == "cart_transport":
            ys = rng.uniform(*gs["position_range"], size=2)
            offs = rng.uniform(*gs["offset_range"], size=2)
            start = np.array([ys[0] + offs[0], ys[0], 0.0, 0.0])
            goal = np.array([ys[1] + offs[1], ys[1], 0.0, 0.0])
            out.append(GoalSpec(start, goal, seed, i))
        else:
            out.append(GoalSpec(np.zeros(2), np.zeros(2), seed, i))
    return out


def contact_forces(problem: MpccProblem):
    """Column names and a ``(T, k) -> values`` map of body-frame contact forces per step."""
    md = problem.meta
    task = md.get("task")
    n_s = md.get("n_s", 0)
    if task == "push_box":
        n_f = md["n_force"]
        names = [f"force{k}_{ax}" for k in range(n_f) for ax in ("x", "y")]

        def fn(X2):
            f, q = X2[:, n_s:n_s + n_f], np.tanh(X2[:, n_s + n_f])
            vec = md["normals"][None] + md["pusher_friction"] * q[:, None, None] * md["tangents"][None]
            return (f[:, :, None] * vec).reshape(X2.shape[0], -1)

        return names, fn
    if task == "push_t":
        dirs = md["force_dirs"]
        names = [f"force{k}_{ax}" for k in range(dirs.shape[0]) for ax in ("x", "y")]

        def fn(X2):
            c = X2[:, n_s:n_s + dirs.shape[0]]
            return (c[:, :, None] * dirs[None]).reshape(X2.shape[0], -1)

        return names, fn
    if task == "cart_transport":
        return ["friction_force"], lambda X2: X2[:, n_s + 1:n_s + 2]
    return [], lambda X2: np.zeros((X2.shape[0], 0))


def build_task(spec: TaskSpec, goal: GoalSpec | None = None) -> MpccProblem:
    if spec.task == "toy_2d":
        return build_toy_from_spec(spec)
    builder = {"push_box": build_push_box, "push_t": build_push_t, "cart_transport": build_cart_transport}
    return builder[spec.task](spec, goal)
