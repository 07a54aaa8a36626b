"""Task specifications loaded from the per-task manifest files."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..aula import AulaConfig
from ..bcd import BcdConfig
from ..penalty import PenaltyConfig

TASKS = ("push_box", "push_t", "cart_transport", "toy_2d")

# (n_x, n_u, n_c, n_e, n_i) per benchmark task
TABLE_DIMS = {
    "push_box": (3, 6, 10, 0, 0),
    "push_t": (3, 24, 43, 7, 4),
    "cart_transport": (4, 4, 3, 1, 4),
    "toy_2d": (2, 0, 1, 0, 0),
}


class ConfigurationError(ValueError):
    """Manifest contents are invalid or disagree with the task dimensions."""


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


@dataclass(frozen=True)
class TaskSpec:
    task: str
    dt: float
    horizon: int
    dims: dict
    physics: dict = field(default_factory=dict)
    stage_weight: float = 0.0
    final_weight: float = 0.0
    cost: dict = field(default_factory=dict)
    outer: dict = field(default_factory=dict)
    inner: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    goals: dict = field(default_factory=dict)
    penalty: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TABLE_DIMS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        got = tuple(self.dims.get(k) for k in ("n_x", "n_u", "n_c", "n_e", "n_i"))
        if got != TABLE_DIMS[self.task]:
            raise ConfigurationError(f"{self.task} dimensions {got} differ from {TABLE_DIMS[self.task]}")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        min_t = 1 if self.task == "toy_2d" else 2
        if self.horizon < min_t:
            raise ConfigurationError(f"horizon must be at least {min_t}")

    def aula_config(self, **overrides) -> AulaConfig:
        o = self.outer
        kw = dict(
            kappa_min=-o["safeguard"],
            kappa_max=o["safeguard"],
            mu_max=o["safeguard"],
            gamma=o["gamma"],
            eta=o["eta"],
            rho_h0=o["rho0"],
            rho_g0=o["rho0"],
            rho_max=o["rho_max"],
            eps_w=o["eps_w"],
            eps_g=o["eps_g"],
            eps_h=o["eps_h"],
            eps_comp=o["eps_comp"],
            max_outer=int(o["max_outer"]),
            max_total_sweeps=int(o["max_total_sweeps"]),
        )
        kw.update(overrides)
        return AulaConfig(**kw)

    def bcd_config(self, **overrides) -> BcdConfig:
        i = self.inner
        kw = dict(
            max_sweeps=int(i["max_sweeps"]),
            stagnation_tol=i["stagnation_tol"],
            gn_max_iters=int(i["gn_max_iters"]),
            gn_step_tol=i["gn_step_tol"],
            gn_regularization=i["gn_regularization"],
        )
        if "stagnation_decay" in i:
            kw["stagnation_decay"] = i["stagnation_decay"]
        kw.update(overrides)
        return BcdConfig(**kw)


    def penalty_config(self, rho_c: float | None = None, **overrides) -> PenaltyConfig:
        rc = self.penalty.get("rho_c", 1e4) if rho_c is None else rho_c
        return PenaltyConfig(rc, self.aula_config(), self.bcd_config(**overrides))


def _section(cp, name) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, val in cp.items(name):
        try:
            out[key] = _floats(val) if "," in val else float(val)
        except ValueError as exc:
            raise ConfigurationError(f"[{name}] {key} = {val!r} is not numeric") from exc
    return out


def manifest_path(task: str) -> Path:
    if task not in TASKS:
        raise ConfigurationError(f"unknown task {task!r}")
    return Path(str(resources.files(__package__) / "manifests" / f"{task}.ini"))


def load_task_spec(task: str, override: str | Path | None = None) -> TaskSpec:
    """Read the bundled manifest for ``task``, optionally overlaid by a user file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read(manifest_path(task))
    if override is not None:
        path = Path(override)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigurationError(str(exc)) from exc
    if cp.get("task", "id", fallback=task) != task:
        raise ConfigurationError(f"manifest is for task {cp.get('task', 'id')!r}, not {task!r}")
    try:
        dt = cp.getfloat("task", "dt")
        horizon = cp.getint("task", "horizon")
        dims = {k: int(v) for k, v in _section(cp, "dims").items()}
    except (configparser.Error, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
    cost = _section(cp, "cost")
    return TaskSpec(
        task=task,
        dt=dt,
        horizon=horizon,
        dims=dims,
        physics=_section(cp, "physics"),
        stage_weight=cost.get("stage_weight", 0.0),
        final_weight=cost.get("final_weight", 0.0),
        cost=cost,
        outer=_section(cp, "outer"),
        inner=_section(cp, "inner"),
        model=_section(cp, "model"),
        goals=_section(cp, "goals"),
        penalty=_section(cp, "penalty"),
    )
