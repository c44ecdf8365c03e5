"""Scenario configuration: schema, validation, and (de)serialization.

Scenarios are YAML files with human-readable keys; round-tripping through
`scenario_to_dict` / `scenario_from_dict` is lossless. Validation reports
every violation with its field path instead of stopping at the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .momdp import GridWorldSpec

Cell = tuple[int, int]


class ScenarioError(ValueError):
    """Invalid scenario file: parse failure or validation violations."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class UncertainCellConfig:
    cell: Cell
    occupied: bool = False
    prior: float = 0.5


@dataclass
class TaskConfig:
    id: str
    goal: list[Cell]
    t_start: int
    t_end: int
    rewards: list[float]
    candidates: list[int] | None = None  # default: all agents


@dataclass
class RandomTaskConfig:
    """Seeded task generator: tops the active set up to `target_active` tasks
    with uniform goals over free cells and horizons in [horizon_min, horizon_max]."""

    target_active: int = 2
    horizon_min: int = 5
    horizon_max: int = 9
    reward_tables: list[list[float]] = field(default_factory=list)
    stop_time: int = 10**9


@dataclass
class SimParams:
    slip_prob: float = 0.1
    flip_prob: float = 0.05
    obs_bands: tuple[float, float, float] = (1.0, 0.8, 0.5)
    move_cost: float = 1.0
    maxsum_max_iter: int = 50
    damping: float = 0.0
    dp_horizon: int = 3
    eps_tie: float = 1e-6
    forbid_swaps: bool = False
    max_steps: int = 50
    candidate_filtering: bool = True
    stop_on_empty: bool = True  # stop early once no task is or will be active


@dataclass
class ScenarioConfig:
    width: int
    height: int
    obstacles: list[Cell] = field(default_factory=list)
    uncertain_cells: list[UncertainCellConfig] = field(default_factory=list)
    agents: list[Cell] = field(default_factory=list)
    tasks: list[TaskConfig] = field(default_factory=list)
    random_tasks: RandomTaskConfig | None = None
    params: SimParams = field(default_factory=SimParams)
    seed: int = 0

    def grid_spec(self) -> GridWorldSpec:
        return GridWorldSpec(
            width=self.width, height=self.height,
            static_obstacles=frozenset(tuple(c) for c in self.obstacles),
            uncertain_cells=tuple(tuple(u.cell) for u in self.uncertain_cells),
            slip_prob=self.params.slip_prob, flip_prob=self.params.flip_prob,
            obs_bands=tuple(self.params.obs_bands),
            move_cost=self.params.move_cost)

    def validate(self) -> list[str]:
        errs: list[str] = []
        try:
            spec = self.grid_spec()
        except ValueError as exc:
            return [f"grid: {exc}"]

        blocked = set(spec.static_obstacles)
        seen: set[Cell] = set()
        for idx, cell in enumerate(self.agents):
            cell = tuple(cell)
            path = f"agents[{idx}]"
            if not spec.in_bounds(cell):
                errs.append(f"{path}: start {cell} out of bounds")
            elif cell in blocked:
                errs.append(f"{path}: start {cell} is on an obstacle")
            if cell in seen:
                errs.append(f"{path}: start {cell} duplicates another agent")
            seen.add(cell)
        if not self.agents:
            errs.append("agents: at least one agent is required")

        for idx, u in enumerate(self.uncertain_cells):
            if not 0.0 <= u.prior <= 1.0:
                errs.append(f"uncertain_cells[{idx}].prior: {u.prior} not in [0, 1]")

        ids = set()
        for idx, tc in enumerate(self.tasks):
            path = f"tasks[{idx}]"
            if tc.id in ids:
                errs.append(f"{path}.id: duplicate id {tc.id!r}")
            ids.add(tc.id)
            if tc.t_start < 0 or tc.t_start >= tc.t_end:
                errs.append(f"{path}: window [{tc.t_start}, {tc.t_end}) is invalid")
            if tc.t_end > self.params.max_steps:
                errs.append(f"{path}: t_end {tc.t_end} exceeds max_steps "
                            f"{self.params.max_steps}")
            for cell in tc.goal:
                if not spec.in_bounds(tuple(cell)):
                    errs.append(f"{path}.goal: cell {tuple(cell)} out of bounds")
                elif tuple(cell) in blocked:
                    errs.append(f"{path}.goal: cell {tuple(cell)} is an obstacle")
            cands = tc.candidates if tc.candidates is not None else list(range(len(self.agents)))
            if any(c < 0 or c >= len(self.agents) for c in cands):
                errs.append(f"{path}.candidates: unknown agent index")
            if len(tc.rewards) != len(cands) + 1:
                errs.append(f"{path}.rewards: {len(tc.rewards)} entries, expected "
                            f"{len(cands) + 1}")

        p = self.params
        for name, val in (("slip_prob", p.slip_prob), ("flip_prob", p.flip_prob),
                          ("damping", p.damping)):
            if not 0.0 <= val <= 1.0:
                errs.append(f"params.{name}: {val} not in [0, 1]")
        if p.maxsum_max_iter < 1:
            errs.append("params.maxsum_max_iter: must be >= 1")
        if p.dp_horizon < 1:
            errs.append("params.dp_horizon: must be >= 1")
        if p.eps_tie <= 0:
            errs.append("params.eps_tie: must be > 0")
        if p.max_steps < 1:
            errs.append("params.max_steps: must be >= 1")
        if self.random_tasks is not None:
            rt = self.random_tasks
            if rt.horizon_min < 1 or rt.horizon_min > rt.horizon_max:
                errs.append("random_tasks: invalid horizon range")
            if not rt.reward_tables:
                errs.append("random_tasks.reward_tables: must not be empty")
            for ri, table in enumerate(rt.reward_tables):
                if len(table) != len(self.agents) + 1:
                    errs.append(f"random_tasks.reward_tables[{ri}]: {len(table)} "
                                f"entries, expected {len(self.agents) + 1}")
        return errs


def scenario_to_dict(config: ScenarioConfig) -> dict:
    data = {
        "grid": {
            "width": config.width,
            "height": config.height,
            "obstacles": [list(c) for c in config.obstacles],
            "uncertain_cells": [
                {"cell": list(u.cell), "occupied": u.occupied, "prior": u.prior}
                for u in config.uncertain_cells],
        },
        "agents": [list(c) for c in config.agents],
        "tasks": [
            {"id": tc.id, "goal": [list(c) for c in tc.goal],
             "t_start": tc.t_start, "t_end": tc.t_end,
             "rewards": list(tc.rewards),
             **({"candidates": list(tc.candidates)} if tc.candidates is not None else {})}
            for tc in config.tasks],
        "params": asdict(config.params) | {"obs_bands": list(config.params.obs_bands)},
        "seed": config.seed,
    }
    if config.random_tasks is not None:
        data["random_tasks"] = asdict(config.random_tasks)
    return data


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        grid = data.get("grid", {})
        uncertain = [UncertainCellConfig(cell=tuple(u["cell"]),
                                         occupied=bool(u.get("occupied", False)),
                                         prior=float(u.get("prior", 0.5)))
                     for u in grid.get("uncertain_cells", [])]
        tasks = [TaskConfig(id=str(tc["id"]),
                            goal=[tuple(c) for c in tc["goal"]],
                            t_start=int(tc["t_start"]), t_end=int(tc["t_end"]),
                            rewards=[float(r) for r in tc["rewards"]],
                            candidates=(list(tc["candidates"])
                                        if "candidates" in tc else None))
                 for tc in data.get("tasks", [])]
        random_tasks = None
        if "random_tasks" in data:
            rt = data["random_tasks"]
            random_tasks = RandomTaskConfig(
                target_active=int(rt.get("target_active", 2)),
                horizon_min=int(rt.get("horizon_min", 5)),
                horizon_max=int(rt.get("horizon_max", 9)),
                reward_tables=[[float(r) for r in tab]
                               for tab in rt.get("reward_tables", [])],
                stop_time=int(rt.get("stop_time", 10**9)))
        raw_params = dict(data.get("params", {}))
        if "obs_bands" in raw_params:
            raw_params["obs_bands"] = tuple(raw_params["obs_bands"])
        params = SimParams(**raw_params)
        return ScenarioConfig(
            width=int(grid["width"]), height=int(grid["height"]),
            obstacles=[tuple(c) for c in grid.get("obstacles", [])],
            uncertain_cells=uncertain,
            agents=[tuple(c) for c in data.get("agents", [])],
            tasks=tasks, random_tasks=random_tasks, params=params,
            seed=int(data.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError([f"malformed scenario: {exc!r}"]) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file; raises ScenarioError listing every
    violation with its field path."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioError([f"scenario file not found: {path}"])
    except yaml.YAMLError as exc:
        raise ScenarioError([f"YAML parse error: {exc}"])
    if not isinstance(data, dict):
        raise ScenarioError(["scenario file must contain a mapping"])
    config = scenario_from_dict(data)
    problems = config.validate()
    if problems:
        raise ScenarioError(problems)
    return config


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(config), fh, sort_keys=False)
