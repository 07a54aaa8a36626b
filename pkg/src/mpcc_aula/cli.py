"""Command-line harness: single solves, benchmark sweeps and diagnostic studies.

Exit codes: 0 on success, 1 when a solve does not converge, 2 for invalid
input (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .aula import SolveReport, aula_solve
from .benchmarks.metrics import evaluate_metrics
from .benchmarks.spec import TASKS, ConfigurationError, TaskSpec, load_task_spec
from .benchmarks.tasks import GoalSpec, build_task, build_toy_from_spec, contact_forces, sample_goals
from .diagnostics import iterate_path, stagnation_study
from .penalty import penalty_solve
from .problem import evaluate_values

SOLVERS = ("impact", "penalty")

METRIC_COLUMNS = ["task", "solver", "seed", "trial", "success", "tracking_error", "sweeps", "outer_iters",
                  "goal_error", "eq_inf", "ineq_inf", "comp_inf"]
TIMING_COLUMNS = ["task", "solver", "seed", "trial", "wall_time", "derivative_time"]


class UsageError(Exception):
    """Invalid command-line input; maps to exit status 2."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _finite(obj):
    """Replace non-finite floats by ``None`` so the document stays valid JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def _parse_vector(text: str | None, size: int, label: str):
    if text is None:
        return None
    try:
        vec = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"--{label} must be comma-separated numbers") from exc
    if vec.size != size:
        raise UsageError(f"--{label} needs {size} values")
    return vec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcc-aula", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("solve", "benchmark", "diagnostics"))
    ap.add_argument("--task", required=True, choices=TASKS)
    ap.add_argument("--solver", default="impact", choices=SOLVERS)
    ap.add_argument("--trials", type=int, default=None, help="trial count (benchmark, diagnostics)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="out")
    ap.add_argument("--config", default=None, help="manifest file overlaid on the bundled one")
    ap.add_argument("--rho-c", type=float, default=None, help="penalty weight of the baseline solver")
    ap.add_argument("--start", default=None, help="solve: start state, comma separated")
    ap.add_argument("--goal", default=None, help="solve: goal state, comma separated")
    return ap


# ---------------------------------------------------------------------------
# solving


def run_solver(spec: TaskSpec, solver: str, goal: GoalSpec, rho_c: float | None = None):
    problem = build_task(spec, goal)
    if solver == "impact":
        rep = aula_solve(problem, None, spec.aula_config(), spec.bcd_config())
    else:
        rep = penalty_solve(problem, None, spec.penalty_config(rho_c))
    return problem, rep


def trajectory_rows(problem, rep: SolveReport, dt: float):
    X2 = problem.reshape_x(rep.state.X)
    T = problem.horizon
    n_s = problem.meta.get("n_s", problem.n_x)
    vals = evaluate_values(problem, rep.state.X)
    nc = problem.n_c
    if rep.state.Y.size == problem.size_c:
        Y = rep.state.Y.reshape(T, nc)
        Z = rep.state.Z.reshape(T, nc)
    else:
        # slack-free solvers: report the pair functions themselves
        Y, Z = vals.G, vals.H
    fnames, ffun = contact_forces(problem)
    header = (["t"] + [f"s{i}" for i in range(n_s)] + [f"u{i}" for i in range(problem.n_x - n_s)] + fnames
              + [f"G{i}" for i in range(nc)] + [f"H{i}" for i in range(nc)]
              + [f"y{i}" for i in range(nc)] + [f"z{i}" for i in range(nc)])
    body = np.column_stack([np.arange(T) * dt, X2, ffun(X2), vals.G, vals.H, Y, Z])
    return header, body.tolist()


SWEEP_COLUMNS = ["outer", "sweep", "phi", "delta_phi", "grad_x_inf", "step_length", "backtracks", "gn_iters"]


def _select_goal(spec: TaskSpec, args) -> GoalSpec:
    goal = sample_goals(spec, 1, args.seed)[0]
    dim = goal.goal.size
    start = _parse_vector(args.start, dim, "start")
    target = _parse_vector(args.goal, dim, "goal")
    if start is None and target is None:
        return goal
    return GoalSpec(goal.start if start is None else start, goal.goal if target is None else target, args.seed, 0)


def cmd_solve(spec: TaskSpec, args, out: Path) -> int:
    goal = _select_goal(spec, args)
    problem, rep = run_solver(spec, args.solver, goal, args.rho_c)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"task": spec.task, "solver": args.solver, "seed": args.seed,
           "start": goal.start, "goal": goal.goal, **rep.to_dict()}
    if spec.task != "toy_2d":
        doc["metrics"] = vars(evaluate_metrics(problem, rep, goal, spec.goals.get("goal_tol", 1e-2)))
    (out / "report.json").write_text(json.dumps(_finite(doc), indent=2, allow_nan=False) + "\n")
    header, rows = trajectory_rows(problem, rep, spec.dt)
    _write_csv(out / "trajectory.csv", header, rows)
    _write_csv(out / "sweeps.csv", SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rep.sweeps])
    print(f"{spec.task} {args.solver}: {rep.status} after {rep.total_sweeps} sweeps, {rep.wall_time:.3f} s")
    if rep.converged:
        return 0
    return 1


# ---------------------------------------------------------------------------
# benchmark


def run_trial(task: str, config, solver: str, seed: int, index: int, rho_c):
    """One benchmark trial; top-level so worker processes can import it."""
    spec = load_task_spec(task, config)
    goal = sample_goals(spec, index + 1, seed)[index]
    problem, rep = run_solver(spec, solver, goal, rho_c)
    met = evaluate_metrics(problem, rep, goal, spec.goals.get("goal_tol", 1e-2))
    feas = rep.original_feasibility
    metrics = [task, solver, seed, index, met.success, met.tracking_error, met.sweeps, rep.outer_iters,
               met.goal_error, feas.eq_inf, feas.ineq_inf, feas.comp_inf]
    timing = [task, solver, seed, index, rep.wall_time, rep.derivative_time]
    return metrics, timing


def aggregate(rows, first_numeric: int):
    """Mean and 95% half-width (1.96 standard errors) of every numeric column."""
    data = np.array([[float(v) for v in r[first_numeric:]] for r in rows])
    mean = data.mean(axis=0)
    n = data.shape[0]
    half = 1.96 * data.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(data.shape[1])
    return mean.tolist(), half.tolist()


def _with_aggregates(rows, lead):
    mean, half = aggregate(rows, 4)
    return rows + [lead + ["mean"] + mean, lead + ["ci95"] + half]


def cmd_benchmark(spec: TaskSpec, args, out: Path) -> int:
    if spec.task == "toy_2d":
        raise UsageError("benchmark needs a trajectory task")
    jobs = [(spec.task, args.config, args.solver, args.seed, i, args.rho_c) for i in range(args.trials)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_trial, *zip(*jobs)))
    else:
        results = [run_trial(*j) for j in jobs]
    lead = [spec.task, args.solver, args.seed]
    metrics = _with_aggregates([m for m, _ in results], lead)
    timing = _with_aggregates([t for _, t in results], lead)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, metrics)
    _write_csv(out / "timing.csv", TIMING_COLUMNS, timing)
    succ = metrics[-2][4]
    print(f"{spec.task} {args.solver}: success {100 * succ:.1f}% over {args.trials} trials, "
          f"mean time {timing[-2][4]:.3f} s")
    return 0


# ---------------------------------------------------------------------------
# diagnostics


def cmd_diagnostics(spec: TaskSpec, args, out: Path) -> int:
    if spec.task == "toy_2d":
        problem = build_toy_from_spec(spec)
        out.mkdir(parents=True, exist_ok=True)
        summary = {}
        for solver in ("impact", "penalty"):
            if solver == "impact":
                rows, rep = iterate_path(problem, solver, None, spec.aula_config(), spec.bcd_config())
                header = ["outer", "sweep", "x1", "x2", "y", "z"]
            else:
                pc = spec.penalty_config(args.rho_c)
                rows, rep = iterate_path(problem, solver, None, pc.aula, pc.bcd, pc.rho_c)
                header = ["outer", "sweep", "x1", "x2"]
            _write_csv(out / f"path_{solver}.csv", header, rows)
            summary[solver] = {"status": rep.status, "solution": rep.state.X, "sweeps": rep.total_sweeps}
        (out / "toy_summary.json").write_text(json.dumps(_finite(summary), indent=2, allow_nan=False) + "\n")
        print("toy paths:", {k: v["status"] for k, v in summary.items()})
        return 0
    if spec.task != "push_t":
        raise UsageError("diagnostics supports push_t (correlation) and toy_2d (paths)")
    problems = [build_task(spec, g) for g in sample_goals(spec, args.trials, args.seed)]
    fit, rows = stagnation_study(problems, spec.bcd_config(), seed=args.seed)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "correlation_pairs.csv", ["run", "sweep", "sqrt_delta_phi", "grad_x_inf"], rows)
    (out / "correlation_summary.json").write_text(json.dumps(_finite(vars(fit)), indent=2) + "\n")
    print(f"correlation rho={fit.rho:.3f} exponent={fit.exponent:.3f} c={fit.constant:.3f} "
          f"({fit.n_pairs} pairs, {fit.n_runs} runs)")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.trials is None:
            args.trials = {"solve": 1, "benchmark": 20, "diagnostics": 10}[args.command]
        if args.trials < 1:
            raise UsageError("--trials must be at least 1")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if args.rho_c is not None and not args.rho_c > 0:
            raise UsageError("--rho-c must be positive")
        spec = load_task_spec(args.task, args.config)
        if args.command == "solve" and spec.task != "toy_2d":
            _select_goal(spec, args)
        out = Path(args.out)
        if out.exists() and not out.is_dir():
            raise UsageError(f"{out} exists and is not a directory")
        cmd = {"solve": cmd_solve, "benchmark": cmd_benchmark, "diagnostics": cmd_diagnostics}[args.command]
        return cmd(spec, args, out)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
