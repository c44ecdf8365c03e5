"""Local conflict resolution between adjacent agents.

Agents whose current states can reach a common successor are grouped into
connected components of the adjacency graph; each multi-agent component is
resolved by a depth-limited forward dynamic program over joint actions.
Nodes with any pairwise collision probability are trimmed, as are dominated
nodes (same joint state distribution, lower accumulated reward), and only
the first joint action of the best leaf is executed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .momdp import Belief, MomdpModel
from .values import ValueTables

# per-agent state distribution as a canonical tuple of (state, prob)
StateDist = tuple[tuple[int, float], ...]


class ResolutionError(RuntimeError):
    """No collision-free joint action exists (distinct-start violation)."""


@dataclass(frozen=True)
class AgentPlanInput:
    """One agent's inputs to forward DP.

    tables is None for unassigned agents, which contribute running cost only.
    delta_r is the marginal reward of this agent's arrival for its task.
    """

    agent_id: int
    state: int
    tables: ValueTables | None = None
    delta_r: float = 0.0
    deadline: int | None = None


@dataclass
class SearchNode:
    dists: tuple[StateDist, ...]
    reward: float
    actions: tuple[tuple[int, ...], ...]


def build_adjacency_partition(agent_states: dict[int, int],
                              model: MomdpModel) -> list[list[int]]:
    """Connected components of the agent adjacency graph, each sorted by id."""
    from .momdp import adjacent_states

    agents = sorted(agent_states)
    parent = {i: i for i in agents}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in combinations(agents, 2):
        if adjacent_states(model, agent_states[i], agent_states[j]):
            parent[find(i)] = find(j)

    components: dict[int, list[int]] = {}
    for i in agents:
        components.setdefault(find(i), []).append(i)
    return sorted(components.values())


def select_host(subgraph) -> int:
    """Deterministic host choice for a component: the lowest agent id."""
    if not subgraph:
        raise ValueError("empty subgraph")
    return min(subgraph)


def _point_dist(s: int) -> StateDist:
    return ((s, 1.0),)


def _step_dist(dist: StateDist, action: int, trans_b: np.ndarray) -> StateDist:
    """Push a state distribution through the belief-averaged execution model."""
    out: dict[int, float] = {}
    for s, p in dist:
        row = trans_b[s, action]
        for s2 in np.flatnonzero(row):
            out[int(s2)] = out.get(int(s2), 0.0) + p * float(row[s2])
    return tuple(sorted(out.items()))


def _support(dist: StateDist) -> set[int]:
    return {s for s, _ in dist}


def _expected_step_cost(dist: StateDist, action: int, trans_b: np.ndarray,
                        j_bar: np.ndarray) -> float:
    return sum(p * float((trans_b[s, action] * j_bar[s, action]).sum())
               for s, p in dist)


def _terminal_value(agent: AgentPlanInput, dist: StateDist, t: int) -> float:
    if agent.tables is None:
        return 0.0
    total = 0.0
    for s, p in dist:
        total += p * (float(agent.tables.v_cost[t, s])
                      + agent.delta_r * float(agent.tables.v_reach[t, s]))
    return total


def forward_dp(agents: list[AgentPlanInput], exec_model: MomdpModel, b: Belief,
               t: int, horizon: int, forbid_swaps: bool = False,
               trim_dominated: bool = True,
               stats: dict | None = None) -> tuple[dict[int, int], float]:
    """Resolve one component by forward DP over joint actions.

    Expands the depth-`horizon` tree of joint actions under the
    belief-averaged execution transitions, trims collision and dominated
    nodes, adds terminal value v_cost + delta_r * v_reach at the horizon
    (clamped per agent to its task deadline), and returns the first joint
    action on the path to the best leaf together with its value. Ties break
    to the lexicographically smallest joint-action sequence.
    """
    if horizon < 1:
        raise ValueError("look-ahead horizon must be at least 1")
    agents = sorted(agents, key=lambda a: a.agent_id)
    n = len(agents)
    A = exec_model.num_actions
    trans_b = np.tensordot(exec_model.trans_s, b.probs, axes=([2], [0]))
    obs_mix = np.tensordot(exec_model.obs_fn, b.probs, axes=([1], [0]))
    j_bar = np.einsum("sapo,pao->sap", exec_model.cost, obs_mix)

    starts = [a.state for a in agents]
    if len(set(starts)) != n:
        raise ResolutionError(f"agents start at coincident states {starts}")

    # active[i] = agent still credited toward its task within the window;
    # deadlines trigger by time alone, so activity is uniform across nodes
    active = [a.tables is not None and (a.deadline is None or a.deadline > t)
              for a in agents]
    nodes = [SearchNode(dists=tuple(_point_dist(s) for s in starts),
                        reward=0.0, actions=())]
    expanded = 0

    for depth in range(horizon):
        tau = t + depth + 1
        closing = [i for i in range(n) if active[i] and agents[i].deadline == tau]
        by_state: dict[tuple, SearchNode] = {}
        overflow: list[SearchNode] = []
        # many nodes share per-agent distributions, so push and price each
        # (distribution, action) pair only once per depth
        step_cache: dict[tuple[StateDist, int], tuple[StateDist, float]] = {}

        def stepped(dist: StateDist, action: int) -> tuple[StateDist, float]:
            entry = step_cache.get((dist, action))
            if entry is None:
                entry = (_step_dist(dist, action, trans_b),
                         _expected_step_cost(dist, action, trans_b, j_bar))
                step_cache[(dist, action)] = entry
            return entry

        for node in nodes:
            for joint in product(range(A), repeat=n):
                expanded += 1
                pushed = [stepped(node.dists[i], joint[i]) for i in range(n)]
                new_dists = tuple(p[0] for p in pushed)
                if _collides(node.dists, new_dists, forbid_swaps):
                    continue
                reward = node.reward - sum(p[1] for p in pushed)
                for i in closing:
                    # window closes inside the look-ahead: credit the terminal
                    # value at the deadline, then treat the agent as unassigned
                    reward += _terminal_value(agents[i], new_dists[i], tau)
                candidate = SearchNode(dists=new_dists, reward=reward,
                                       actions=node.actions + (joint,))
                if not trim_dominated:
                    overflow.append(candidate)
                    continue
                held = by_state.get(new_dists)
                if held is None or candidate.reward > held.reward + 1e-12:
                    by_state[new_dists] = candidate
                elif (abs(candidate.reward - held.reward) <= 1e-12
                      and candidate.actions < held.actions):
                    by_state[new_dists] = candidate
        nodes = overflow if not trim_dominated else list(by_state.values())
        if not nodes:
            raise ResolutionError("all joint actions collide; check start states")
        for i in closing:
            active[i] = False

    best: SearchNode | None = None
    best_value = -np.inf
    t_end = t + horizon
    for node in nodes:
        value = node.reward
        for i in range(n):
            if active[i]:
                value += _terminal_value(agents[i], node.dists[i], t_end)
        if (best is None or value > best_value + 1e-12
                or (abs(value - best_value) <= 1e-12 and node.actions < best.actions)):
            best, best_value = node, value
    assert best is not None

    if stats is not None:
        stats["expanded"] = expanded
        stats["leaves"] = len(nodes)
    first = best.actions[0]
    return {agent.agent_id: first[i] for i, agent in enumerate(agents)}, float(best_value)


def _collides(old_dists: tuple[StateDist, ...], new_dists: tuple[StateDist, ...],
              forbid_swaps: bool) -> bool:
    """Any pairwise collision probability > 0 (overlapping supports), plus
    optional swap detection for physical realism."""
    n = len(new_dists)
    supports = [_support(d) for d in new_dists]
    for i, j in combinations(range(n), 2):
        if supports[i] & supports[j]:
            return True
        if forbid_swaps:
            old_i, old_j = _support(old_dists[i]), _support(old_dists[j])
            if (supports[i] & old_j) and (supports[j] & old_i):
                return True
    return False
