"""Multi-robot tasks and their expected pure reward.

A task names a goal set, a candidate agent set, a time window, and a reward
table indexed by how many committed agents arrive in time. The expected pure
reward combines per-agent reach probabilities (a Poisson-binomial arrival
count) with expected movement costs; its discrete derivative with respect to
one agent's arrival is the marginal reward used by conflict resolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .momdp import Belief, MomdpModel
from .values import ValueTables, reach_probability, solve_values

TaskId = str


@dataclass(eq=False)
class Task:
    id: TaskId
    goal: frozenset[int]
    candidates: tuple[int, ...]
    t_start: int
    t_end: int
    reward_table: tuple[float, ...]
    tables: ValueTables | None = None

    def __post_init__(self):
        self.goal = frozenset(self.goal)
        self.candidates = tuple(self.candidates)
        self.reward_table = tuple(float(r) for r in self.reward_table)
        if not self.candidates:
            raise ValueError(f"task {self.id}: candidate set is empty")
        if self.t_start >= self.t_end:
            raise ValueError(f"task {self.id}: t_start must be before t_end")
        if len(self.reward_table) != len(self.candidates) + 1:
            raise ValueError(
                f"task {self.id}: reward table has {len(self.reward_table)} entries, "
                f"expected {len(self.candidates) + 1}")
        if self.reward_table[0] != 0.0:
            warnings.warn(f"task {self.id}: reward for zero arrivals is nonzero")

    def reward(self, arrivals: int) -> float:
        return self.reward_table[min(arrivals, len(self.reward_table) - 1)]


@dataclass(frozen=True)
class AllocationProblem:
    """One time step's allocation inputs: tasks with solved tables, agent
    states, and the shared belief they were solved for."""

    tasks: tuple[Task, ...]
    agent_states: dict[int, int]
    belief: Belief
    time: int


def poisson_binomial(p: "np.ndarray | list[float]") -> np.ndarray:
    """PMF of the number of successes among independent Bernoulli(p_j) trials.

    Computed by iterative convolution; an empty list yields [1.0].
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must be in [0, 1]")
    pmf = np.array([1.0])
    for pj in p:
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] = pmf * (1.0 - pj)
        nxt[1:] += pmf * pj
        pmf = nxt
    return pmf


def arrival_probabilities(task: Task, committed, states: dict[int, int],
                          t: int) -> np.ndarray:
    """Reach probabilities V_G(t, s_j) for the committed agents, sorted by id."""
    if task.tables is None:
        raise ValueError(f"task {task.id}: value tables not solved")
    return np.array([reach_probability(task.tables, t, states[j])
                     for j in sorted(committed)])


def expected_pure_reward(task: Task, committed, states: dict[int, int],
                         t: int) -> float:
    """Expected reward over the Poisson-binomial arrival count, minus the
    committed agents' expected costs (v_cost is the negative cost-to-go)."""
    committed = sorted(committed)
    unknown = [j for j in committed if j not in task.candidates]
    if unknown:
        raise ValueError(f"task {task.id}: agents {unknown} are not candidates")
    if not committed:
        return task.reward_table[0]
    if t >= task.t_end:
        warnings.warn(f"task {task.id}: expected reward queried at t={t} past t_end")
        return task.reward_table[0]
    pc = poisson_binomial(arrival_probabilities(task, committed, states, t))
    reward = sum(task.reward(i) * pc[i] for i in range(len(pc)))
    cost_term = sum(float(task.tables.v_cost[t, states[j]]) for j in committed)
    return float(reward + cost_term)


def marginal_reward(task: Task, committed, agent: int,
                    states: dict[int, int], t: int) -> float:
    """Discrete derivative of the expected task reward with respect to one
    committed agent's arrival, holding the others' arrival odds fixed."""
    committed = set(committed)
    if agent not in committed:
        raise ValueError(f"agent {agent} is not committed to task {task.id}")
    others = committed - {agent}
    pc = poisson_binomial(arrival_probabilities(task, others, states, t))
    return float(sum((task.reward(i + 1) - task.reward(i)) * pc[i]
                     for i in range(len(pc))))


def candidate_filter(task: Task, states: dict[int, int], t: int,
                     enabled: bool = True) -> tuple[int, ...]:
    """Drop candidates with zero chance of reaching the goal in time."""
    if not enabled:
        return task.candidates
    return tuple(j for j in task.candidates
                 if reach_probability(task.tables, t, states[j]) > 0.0)


def update_task_set(tasks: list[Task], t: int, schedule: list[Task],
                    solver=None) -> tuple[list[Task], list[Task]]:
    """Drop expired tasks and activate scheduled arrivals with t_start == t.

    `solver` is called on each newly activated task to solve its value
    tables. Returns (active tasks, tasks expired at this step).
    """
    expired = [task for task in tasks if t >= task.t_end]
    active = [task for task in tasks if t < task.t_end]
    for task in schedule:
        if task.t_start == t:
            if solver is not None:
                task = solver(task)
            active.append(task)
    return active, expired
