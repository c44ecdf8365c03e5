"""Closed-loop receding-horizon simulation.

Each step: allocate tasks with max-sum, partition agents by adjacency, pick
actions (task policy for singletons, forward DP for interacting groups),
execute on the ground-truth environment, sample observations, update the
shared belief sequentially per agent, then refresh the task set. The engine
owns the ground truth and all randomness; given a scenario and master seed
the produced trace is bit-for-bit reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import maxsum
from .momdp import (ACTION_IDLE, ACTION_NAMES, Belief, GridWorldSpec,
                    MomdpModel, belief_update, build_grid_momdp, manhattan)
from .resolution import AgentPlanInput, build_adjacency_partition, forward_dp
from .scenario import ScenarioConfig, TaskConfig
from .tasks import (AllocationProblem, Task, candidate_filter, marginal_reward,
                    update_task_set)
from .values import PolicyQuery, policy_action, solve_values


@dataclass
class RngStreams:
    """Independent seeded streams, fully determined by the master seed."""

    env: np.random.Generator
    obs: np.random.Generator
    tasks: np.random.Generator

    @staticmethod
    def from_seed(seed: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(3)
        return RngStreams(env=np.random.default_rng(children[0]),
                          obs=np.random.default_rng(children[1]),
                          tasks=np.random.default_rng(children[2]))


@dataclass
class WorldState:
    t: int
    agent_states: dict[int, int]
    env_state: int
    belief: Belief
    tasks: list[Task]
    commitments: dict[int, str | None] = field(default_factory=dict)
    arrivals: dict[str, set[int]] = field(default_factory=dict)
    realized_reward: float = 0.0
    total_cost: float = 0.0


@dataclass
class ScenarioOutcome:
    steps: int
    realized_reward: float
    total_cost: float
    expected_pure_rewards: list[float]
    tasks_completed: dict[str, int]

    @property
    def realized_pure_reward(self) -> float:
        return self.realized_reward - self.total_cost


class CollisionError(AssertionError):
    """Two agents reached the same state at the same time (planner bug)."""


class Simulator:
    def __init__(self, config: ScenarioConfig):
        problems = config.validate()
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))
        self.config = config
        self.params = config.params
        self.spec: GridWorldSpec = config.grid_spec()
        self.plan_model: MomdpModel = build_grid_momdp(self.spec, planning_mode=True)
        self.exec_model: MomdpModel = build_grid_momdp(self.spec, planning_mode=False)
        self.rng = RngStreams.from_seed(config.seed)
        self._value_cache: dict[tuple[str, bytes], object] = {}
        self._generated = 0

        env_state = 0
        for i, u in enumerate(config.uncertain_cells):
            if u.occupied:
                env_state |= 1 << i
        self.world = WorldState(
            t=0,
            agent_states={i: self.spec.state_index(tuple(c))
                          for i, c in enumerate(config.agents)},
            env_state=env_state,
            belief=self._initial_belief(),
            tasks=[])
        self._pending = [self._make_task(tc) for tc in config.tasks]
        self._refresh_tasks()

    # ------------------------------------------------------------------
    # setup helpers

    def _initial_belief(self) -> Belief:
        E = self.spec.num_env_states
        probs = np.ones(E)
        for i, u in enumerate(self.config.uncertain_cells):
            bits = (np.arange(E) >> i) & 1
            probs *= np.where(bits == 1, u.prior, 1.0 - u.prior)
        return Belief(probs)

    def _make_task(self, tc: TaskConfig) -> Task:
        cands = (tuple(tc.candidates) if tc.candidates is not None
                 else tuple(range(len(self.config.agents))))
        return Task(id=tc.id,
                    goal=frozenset(self.spec.state_index(tuple(c)) for c in tc.goal),
                    candidates=cands, t_start=tc.t_start, t_end=tc.t_end,
                    reward_table=tuple(tc.rewards))

    def _ensure_solved(self, task: Task) -> Task:
        key = (task.id, self.world.belief.key())
        tables = self._value_cache.get(key)
        if tables is None:
            tables = solve_values(self.plan_model, task.goal, task.t_end,
                                  self.world.belief, eps_tie=self.params.eps_tie)
            self._value_cache[key] = tables
        if task.tables is not tables:
            task.tables = tables
        return task

    # ------------------------------------------------------------------
    # task set maintenance

    def _refresh_tasks(self) -> list[dict]:
        """Alg.-3 style task update at the current time: expire, activate,
        top up from the random generator. Returns trace events."""
        world = self.world
        events: list[dict] = []
        prev_ids = {task.id for task in world.tasks}
        active, expired = update_task_set(world.tasks, world.t, self._pending)
        self._pending = [task for task in self._pending
                         if task.t_start > world.t and task.t_end > world.t]
        for task in expired:
            arrivals = len(world.arrivals.get(task.id, ()))
            reward = task.reward(arrivals)
            world.realized_reward += reward
            events.append({"event": "task_expired", "task": task.id,
                           "arrivals": arrivals, "reward": reward})
        for task in active:
            if task.id not in prev_ids:
                events.append({"event": "task_added", "task": task.id,
                               "t_end": task.t_end})
        world.tasks = active

        rt = self.config.random_tasks
        if rt is not None and world.t < rt.stop_time:
            free_cells = [(x, y) for y in range(self.spec.height)
                          for x in range(self.spec.width)
                          if (x, y) not in self.spec.static_obstacles
                          and (x, y) not in self.spec.uncertain_cells]
            while len(world.tasks) < rt.target_active:
                goal = free_cells[int(self.rng.tasks.integers(len(free_cells)))]
                horizon = int(self.rng.tasks.integers(rt.horizon_min,
                                                      rt.horizon_max + 1))
                table = rt.reward_tables[int(self.rng.tasks.integers(len(rt.reward_tables)))]
                self._generated += 1
                task = Task(id=f"gen{self._generated}",
                            goal=frozenset({self.spec.state_index(goal)}),
                            candidates=tuple(range(len(self.config.agents))),
                            t_start=world.t, t_end=world.t + horizon,
                            reward_table=tuple(table))
                world.tasks.append(task)
                events.append({"event": "task_added", "task": task.id,
                               "t_end": task.t_end})
        return events

    def _latch_arrivals(self, now: int) -> None:
        world = self.world
        for task in world.tasks:
            if not task.t_start <= now <= task.t_end:
                continue
            latched = world.arrivals.setdefault(task.id, set())
            for agent, committed in world.commitments.items():
                if committed == task.id and agent in task.candidates \
                        and world.agent_states[agent] in task.goal:
                    latched.add(agent)

    # ------------------------------------------------------------------
    # planning

    def plan_step(self) -> dict:
        """Allocate, partition, and choose every agent's action."""
        world = self.world
        states = world.agent_states
        for task in world.tasks:
            self._ensure_solved(task)

        filtered = []
        for task in world.tasks:
            cands = candidate_filter(task, states, world.t,
                                     enabled=self.params.candidate_filtering)
            filtered.append(replace(task,
                                    candidates=cands if cands else task.candidates[:1],
                                    reward_table=task.reward_table[:len(cands) + 1]
                                    if cands else task.reward_table[:2]))

        problem = AllocationProblem(tasks=tuple(filtered), agent_states=dict(states),
                                    belief=world.belief, time=world.t)
        graph = maxsum.build_factor_graph(problem)
        messages = maxsum.run_maxsum(graph, self.params.maxsum_max_iter,
                                     damping=self.params.damping)
        assignment = maxsum.decode_assignment(graph, messages)
        world.commitments = assignment
        expected_reward = maxsum.assignment_value(graph, assignment)

        by_id = {task.id: task for task in world.tasks}
        committed_sets: dict[str, set[int]] = {}
        for agent, task_id in assignment.items():
            if task_id is not None:
                committed_sets.setdefault(task_id, set()).add(agent)

        partition = build_adjacency_partition(states, self.exec_model)
        actions: dict[int, int] = {}
        for component in partition:
            if len(component) == 1:
                agent = component[0]
                task_id = assignment.get(agent)
                if task_id is None:
                    actions[agent] = self.exec_model.idle_action
                else:
                    task = by_id[task_id]
                    actions[agent] = policy_action(
                        task.tables,
                        PolicyQuery(world.t, states[agent], self.params.eps_tie))
            else:
                inputs = []
                for agent in component:
                    task_id = assignment.get(agent)
                    if task_id is None:
                        inputs.append(AgentPlanInput(agent_id=agent,
                                                     state=states[agent]))
                    else:
                        task = by_id[task_id]
                        dr = marginal_reward(task, committed_sets[task_id], agent,
                                             states, world.t)
                        inputs.append(AgentPlanInput(
                            agent_id=agent, state=states[agent],
                            tables=task.tables, delta_r=dr, deadline=task.t_end))
                joint, _ = forward_dp(inputs, self.exec_model, world.belief,
                                      world.t, self.params.dp_horizon,
                                      forbid_swaps=self.params.forbid_swaps)
                actions.update(joint)

        return {"actions": actions, "assignment": assignment,
                "expected_pure_reward": expected_reward,
                "maxsum_rounds": messages.rounds,
                "maxsum_converged": messages.converged,
                "subgraphs": partition}

    # ------------------------------------------------------------------
    # execution

    def execute(self, actions: dict[int, int]) -> dict:
        """Advance the ground truth one step and sample observations."""
        world = self.world
        spec = self.spec
        pre_states = dict(world.agent_states)
        pre_cells = {i: spec.cell_of(s) for i, s in pre_states.items()}

        # environment flips: a cell is frozen while any agent is within
        # Manhattan distance 2 of it (multi-agent rule, pre-move positions)
        new_env = world.env_state
        for i, uc in enumerate(spec.uncertain_cells):
            if any(manhattan(cell, uc) <= 2 for cell in pre_cells.values()):
                continue
            if self.rng.env.random() < spec.flip_prob:
                new_env ^= 1 << i

        # deterministic moves, blocked by the pre-flip environment state
        next_states = {}
        step_cost = 0.0
        for agent in sorted(actions):
            cell = pre_cells[agent]
            target = spec.move_target(cell, actions[agent], world.env_state)
            next_states[agent] = spec.state_index(target)
            if actions[agent] != ACTION_IDLE:
                step_cost += spec.move_cost

        occupied: dict[int, int] = {}
        for agent, s in next_states.items():
            if s in occupied:
                raise CollisionError(
                    f"agents {occupied[s]} and {agent} collided at state {s} "
                    f"(t={world.t + 1})")
            occupied[s] = agent

        # per-agent observation of every uncertain cell from the post-move state
        observations: dict[int, int] = {}
        for agent in sorted(next_states):
            cell = spec.cell_of(next_states[agent])
            o = 0
            for i, uc in enumerate(spec.uncertain_cells):
                truth = (new_env >> i) & 1
                correct = self.rng.obs.random() < spec.band_prob(manhattan(cell, uc))
                if truth if correct else not truth:
                    o |= 1 << i
            observations[agent] = o

        world.env_state = new_env
        world.agent_states = next_states
        world.total_cost += step_cost
        return {"pre_states": pre_states, "observations": observations,
                "step_cost": step_cost}

    def update_belief_all(self, pre_states: dict[int, int],
                          actions: dict[int, int],
                          observations: dict[int, int]) -> None:
        """Sequential Bayes updates of the shared belief, in agent index order."""
        world = self.world
        for agent in sorted(pre_states):
            world.belief = belief_update(self.exec_model, world.belief,
                                         pre_states[agent], actions[agent],
                                         world.agent_states[agent],
                                         observations[agent])

    # ------------------------------------------------------------------
    # episode loop

    def step(self) -> dict:
        """One full planning/execution/update cycle; returns the trace record."""
        world = self.world
        plan = self.plan_step()
        self._latch_arrivals(world.t)
        execution = self.execute(plan["actions"])
        self._latch_arrivals(world.t + 1)
        self.update_belief_all(execution["pre_states"], plan["actions"],
                               observations=execution["observations"])
        world.t += 1
        events = self._refresh_tasks()

        return {
            "t": world.t - 1,
            "states": [world.agent_states[i] for i in sorted(world.agent_states)],
            "pre_states": [execution["pre_states"][i]
                           for i in sorted(execution["pre_states"])],
            "env_state": world.env_state,
            "belief": [float(p) for p in world.belief.probs],
            "assignment": {str(i): plan["assignment"][i]
                           for i in sorted(plan["assignment"])},
            "actions": [ACTION_NAMES[plan["actions"][i]]
                        for i in sorted(plan["actions"])],
            "observations": [execution["observations"][i]
                             for i in sorted(execution["observations"])],
            "subgraphs": plan["subgraphs"],
            "maxsum_rounds": plan["maxsum_rounds"],
            "maxsum_converged": plan["maxsum_converged"],
            "expected_pure_reward": plan["expected_pure_reward"],
            "step_cost": execution["step_cost"],
            "arrivals": {task_id: sorted(agents)
                         for task_id, agents in sorted(world.arrivals.items())},
            "events": events,
            "cum_reward": world.realized_reward,
            "cum_cost": world.total_cost,
        }

    def done(self) -> bool:
        if self.world.t >= self.params.max_steps:
            return True
        if not self.params.stop_on_empty:
            return False
        generating = (self.config.random_tasks is not None
                      and self.world.t < self.config.random_tasks.stop_time)
        return not self.world.tasks and not self._pending and not generating

    def run(self) -> tuple[list[dict], ScenarioOutcome]:
        trace = []
        while not self.done():
            trace.append(self.step())
        outcome = ScenarioOutcome(
            steps=self.world.t,
            realized_reward=self.world.realized_reward,
            total_cost=self.world.total_cost,
            expected_pure_rewards=[rec["expected_pure_reward"] for rec in trace],
            tasks_completed={task_id: len(agents)
                             for task_id, agents in sorted(self.world.arrivals.items())})
        return trace, outcome


def run_episode(config: ScenarioConfig,
                seed: int | None = None) -> tuple[list[dict], ScenarioOutcome]:
    """Run one full episode; `seed` overrides the scenario's master seed."""
    if seed is not None:
        config = replace(config, seed=seed)
    return Simulator(config).run()
