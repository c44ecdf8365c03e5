"""Command-line surface: run episodes, validate scenarios, replay traces,
and dump value tables.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from .momdp import Belief, build_grid_momdp
from .scenario import ScenarioError, load_scenario
from .sim import CollisionError, Simulator
from .trace import TraceError, read_trace, validate_trace, write_trace
from .values import dump_tables, solve_values

log = logging.getLogger("fleetplan")

EXIT_RUNTIME = 1
EXIT_INVALID = 2


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int) -> None:
    """Decentralized multi-robot task allocation and path planning simulator."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")


def _load(scenario_path: str):
    try:
        return load_scenario(scenario_path)
    except ScenarioError as exc:
        for problem in exc.problems:
            click.echo(f"invalid scenario: {problem}", err=True)
        sys.exit(EXIT_INVALID)


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(), help="Scenario YAML file.")
@click.option("--seed", type=int, default=None, help="Master seed override.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Output directory.")
@click.option("--trace/--no-trace", default=True, help="Write the step trace.")
@click.option("--render", is_flag=True, help="Write per-step SVG frames.")
@click.option("--max-steps", type=int, default=None)
@click.option("--maxsum-iters", type=int, default=None)
@click.option("--dp-horizon", type=int, default=None)
@click.option("--forbid-swaps", is_flag=True, default=None)
def run(scenario_path, seed, out_dir, trace, render, max_steps, maxsum_iters,
        dp_horizon, forbid_swaps):
    """Run one episode and write trace + metrics (+ optional frames)."""
    config = _load(scenario_path)
    overrides = {}
    if max_steps is not None:
        overrides["max_steps"] = max_steps
    if maxsum_iters is not None:
        overrides["maxsum_max_iter"] = maxsum_iters
    if dp_horizon is not None:
        overrides["dp_horizon"] = dp_horizon
    if forbid_swaps:
        overrides["forbid_swaps"] = True
    if overrides:
        config = replace(config, params=replace(config.params, **overrides))
    if seed is not None:
        config = replace(config, seed=seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        records, outcome = Simulator(config).run()
    except (CollisionError, Exception) as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)

    if trace:
        write_trace(records, out / "trace.jsonl")
    metrics = {
        "steps": outcome.steps,
        "realized_reward": outcome.realized_reward,
        "total_cost": outcome.total_cost,
        "realized_pure_reward": outcome.realized_pure_reward,
        "expected_pure_reward_per_step": outcome.expected_pure_rewards,
        "tasks_completed": outcome.tasks_completed,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    if render:
        from .render import render_episode

        render_episode(config, records, out / "frames")
    click.echo(f"{outcome.steps} steps, realized pure reward "
               f"{outcome.realized_pure_reward:.3f} "
               f"(reward {outcome.realized_reward:.3f}, "
               f"cost {outcome.total_cost:.3f})")


@main.command()
@click.argument("trace_path", type=click.Path())
def replay(trace_path):
    """Re-check safety and accounting invariants of a trace file."""
    try:
        records = read_trace(trace_path)
    except TraceError as exc:
        click.echo(f"corrupt trace: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    problems = validate_trace(records)
    if problems:
        for problem in problems:
            click.echo(problem, err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"trace OK: {len(records)} steps, no violations")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
def validate(scenario_path):
    """Parse and validate a scenario file."""
    _load(scenario_path)
    click.echo("scenario OK")


@main.command("solve-values")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--task", "task_id", required=True, help="Task id to solve.")
def solve_values_cmd(scenario_path, task_id):
    """Debug dump of a task's reach/cost value tables under the prior belief."""
    config = _load(scenario_path)
    matches = [tc for tc in config.tasks if tc.id == task_id]
    if not matches:
        click.echo(f"no task with id {task_id!r}", err=True)
        sys.exit(EXIT_INVALID)
    tc = matches[0]
    sim = Simulator(config)
    tables = solve_values(sim.plan_model,
                          frozenset(sim.spec.state_index(tuple(c)) for c in tc.goal),
                          tc.t_end, sim.world.belief,
                          eps_tie=config.params.eps_tie)
    click.echo(dump_tables(tables))


if __name__ == "__main__":
    main()
