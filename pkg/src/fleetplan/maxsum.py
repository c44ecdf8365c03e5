"""Max-sum task allocation on a bipartite factor graph.

Variable nodes are the agents' commitment choices (one of their candidate
tasks or none); factor nodes are the tasks' expected pure rewards. Because a
task's reward depends only on which of its candidates commit to it, each
factor is tabulated over binary commit/not choices and messages along an
edge carry two values. Updates read only messages addressed to their own
node, so the schedule maps directly onto a decentralized deployment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .tasks import AllocationProblem, Task, TaskId, expected_pure_reward

CONVERGENCE_TOL = 1e-9


@dataclass(frozen=True)
class Factor:
    """One task's expected pure reward over its candidates' binary choices.

    table has shape (2,) * len(candidates); index 1 = commit.
    """

    task_id: TaskId
    candidates: tuple[int, ...]
    table: np.ndarray


@dataclass(frozen=True)
class FactorGraph:
    agents: tuple[int, ...]
    factors: dict[TaskId, Factor]

    def neighbors_of_agent(self, i: int) -> tuple[TaskId, ...]:
        return tuple(k for k in sorted(self.factors)
                     if i in self.factors[k].candidates)

    def edges(self) -> list[tuple[int, TaskId]]:
        return [(i, k) for i in self.agents for k in self.neighbors_of_agent(i)]


@dataclass
class MessageTable:
    """q (variable-to-factor) and r (factor-to-variable) messages per edge,
    each a length-2 array over {not-commit, commit}."""

    q: dict[tuple[int, TaskId], np.ndarray]
    r: dict[tuple[int, TaskId], np.ndarray]
    rounds: int = 0
    changed_rounds: int = 0
    converged: bool = False

    @staticmethod
    def zeros(graph: FactorGraph) -> "MessageTable":
        edges = graph.edges()
        return MessageTable(q={e: np.zeros(2) for e in edges},
                            r={e: np.zeros(2) for e in edges})

    def r_incoming(self, graph: FactorGraph, i: int) -> dict[TaskId, np.ndarray]:
        """Messages addressed to variable i (all a variable node may read)."""
        return {k: self.r[(i, k)] for k in graph.neighbors_of_agent(i)}

    def q_incoming(self, graph: FactorGraph, k: TaskId) -> dict[int, np.ndarray]:
        """Messages addressed to factor k (all a factor node may read)."""
        return {i: self.q[(i, k)] for i in graph.factors[k].candidates}


def build_factor_graph(problem: AllocationProblem) -> FactorGraph:
    """Tabulate every task's expected pure reward over its candidates'
    commit/not combinations."""
    factors: dict[TaskId, Factor] = {}
    for task in problem.tasks:
        cands = tuple(sorted(task.candidates))
        table = np.zeros((2,) * len(cands))
        for combo in product((0, 1), repeat=len(cands)):
            committed = [c for c, bit in zip(cands, combo) if bit]
            table[combo] = expected_pure_reward(task, committed,
                                                problem.agent_states, problem.time)
        factors[task.id] = Factor(task_id=task.id, candidates=cands, table=table)
    agents = tuple(sorted(problem.agent_states))
    return FactorGraph(agents=agents, factors=factors)


def q_update(graph: FactorGraph, messages: MessageTable, i: int,
             k: TaskId) -> np.ndarray:
    """New q message for edge (i, k): sum of the other factors' r messages,
    maximized over the variable's non-k options for the not-commit entry,
    normalized to sum to zero."""
    incoming = messages.r_incoming(graph, i)
    base = sum(float(incoming[n][0]) for n in incoming if n != k)
    # not-commit covers m^i = none and m^i = any other task
    alternatives = [base] + [base - float(incoming[n][0]) + float(incoming[n][1])
                             for n in incoming if n != k]
    msg = np.array([max(alternatives), base])
    return msg - msg.mean()


def r_update(graph: FactorGraph, messages: MessageTable, i: int,
             k: TaskId) -> np.ndarray:
    """New r message for edge (k, i): factor table plus the other candidates'
    q messages, maximized over their choices."""
    factor = graph.factors[k]
    incoming = messages.q_incoming(graph, k)
    augmented = factor.table.copy()
    axis_of = {n: ax for ax, n in enumerate(factor.candidates)}
    for n in factor.candidates:
        if n == i:
            continue
        shape = [1] * augmented.ndim
        shape[axis_of[n]] = 2
        augmented = augmented + incoming[n].reshape(shape)
    reduce_axes = tuple(ax for n, ax in axis_of.items() if n != i)
    if reduce_axes:
        augmented = augmented.max(axis=reduce_axes)
    return np.asarray(augmented, dtype=float)


def run_maxsum(graph: FactorGraph, max_iter: int, damping: float = 0.0,
               tol: float = CONVERGENCE_TOL) -> MessageTable:
    """Synchronous rounds (all q in agent order, then all r in task order)
    until a fixpoint or max_iter. Non-convergence is reported via the
    converged flag, not an error."""
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    messages = MessageTable.zeros(graph)
    edges = graph.edges()
    if not edges:
        messages.converged = True
        return messages

    for _ in range(max_iter):
        delta = 0.0
        new_q = {(i, k): q_update(graph, messages, i, k) for i, k in edges}
        for e, msg in new_q.items():
            if damping:
                msg = (1.0 - damping) * msg + damping * messages.q[e]
            delta = max(delta, float(np.abs(msg - messages.q[e]).max()))
            messages.q[e] = msg
        new_r = {(i, k): r_update(graph, messages, i, k) for i, k in edges}
        for e, msg in new_r.items():
            if damping:
                msg = (1.0 - damping) * msg + damping * messages.r[e]
            delta = max(delta, float(np.abs(msg - messages.r[e]).max()))
            messages.r[e] = msg
        messages.rounds += 1
        if delta < tol:
            messages.converged = True
            break
        messages.changed_rounds += 1
    return messages


def decode_assignment(graph: FactorGraph,
                      messages: MessageTable) -> dict[int, TaskId | None]:
    """Per-agent argmax of the summed r messages; ties prefer no commitment,
    then the lowest task id."""
    assignment: dict[int, TaskId | None] = {}
    for i in graph.agents:
        incoming = messages.r_incoming(graph, i)
        base = sum(float(msg[0]) for msg in incoming.values())
        best: TaskId | None = None
        best_score = base
        for k in sorted(incoming):
            score = base - float(incoming[k][0]) + float(incoming[k][1])
            if score > best_score + CONVERGENCE_TOL:
                best, best_score = k, score
        assignment[i] = best
    return assignment


def assignment_value(graph: FactorGraph,
                     assignment: dict[int, TaskId | None]) -> float:
    """Total expected pure reward of an assignment under the factor tables."""
    total = 0.0
    for k, factor in graph.factors.items():
        idx = tuple(1 if assignment.get(n) == k else 0 for n in factor.candidates)
        total += float(factor.table[idx])
    return total


def brute_force_assignment(graph: FactorGraph) -> tuple[dict[int, TaskId | None], float]:
    """Exhaustive argmax over all joint commitments (test oracle and
    small-instance fallback)."""
    domains = [(i, (None,) + graph.neighbors_of_agent(i)) for i in graph.agents]
    best, best_val = None, -np.inf
    for combo in product(*(dom for _, dom in domains)):
        assignment = {i: m for (i, _), m in zip(domains, combo)}
        val = assignment_value(graph, assignment)
        if val > best_val:
            best, best_val = assignment, val
    return best if best is not None else {}, best_val
