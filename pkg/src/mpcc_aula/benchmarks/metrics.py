"""Per-trial task metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..aula import SolveReport
from ..problem import MpccProblem
from .tasks import GoalSpec

FEAS_TOL = 1e-5
GOAL_TOL = 1e-2
STUCK_FRACTION = 0.1
STUCK_MOTION = 1e-4


@dataclass(frozen=True)
class TaskMetrics:
    success: bool
    tracking_error: float
    sweeps: int
    wall_time: float
    goal_error: float
    stuck: bool
    feasibility: float


def pose_trajectory(problem: MpccProblem, X, n_pose: int) -> np.ndarray:
    return problem.reshape_x(X)[:, :n_pose]


def is_stuck(poses: np.ndarray, goal, goal_tol: float = GOAL_TOL) -> bool:
    """True when the last 10% of the horizon barely moves while the goal is still missed."""
    T = poses.shape[0]
    tail = poses[max(0, T - max(1, int(np.ceil(STUCK_FRACTION * T))) - 1):]
    motion = float(np.max(np.abs(np.diff(tail, axis=0)))) if tail.shape[0] > 1 else 0.0
    err = float(np.max(np.abs(poses[-1] - goal)))
    return motion < STUCK_MOTION and err > goal_tol


def tracking_error(poses: np.ndarray, goal, weights=None) -> float:
    """``sum_t ||pose_t - goal||_W^2``; unit weights by default."""
    diff = poses - np.asarray(goal, dtype=float)
    w = np.ones(diff.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(diff * diff * w))


def evaluate_metrics(problem: MpccProblem, report: SolveReport, goal: GoalSpec,
                     goal_tol: float = GOAL_TOL) -> TaskMetrics:
    g = np.asarray(goal.goal, dtype=float)
    poses = pose_trajectory(problem, report.state.X, g.size)
    err = float(np.max(np.abs(poses[-1] - g)))
    stuck = is_stuck(poses, g, goal_tol)
    feas = max(report.feasibility.max(), report.original_feasibility.max())
    success = bool(report.converged and err <= goal_tol and not stuck and feas <= FEAS_TOL)
    return TaskMetrics(
        success=success,
        tracking_error=tracking_error(poses, g),
        sweeps=int(report.total_sweeps),
        wall_time=float(report.wall_time),
        goal_error=err,
        stuck=stuck,
        feasibility=feas,
    )
