"""Finite-horizon lexicographic value synthesis for a frozen belief.

Solves two value tables by backward recursion over belief-averaged
transitions: V_G(t, s), the maximum probability of reaching the goal set by
the horizon, and V_J(t, s), the expected negative cost-to-go of the policy
that maximizes reach probability first and cost second. The belief is held
constant over the horizon; callers re-solve whenever the belief changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .momdp import Belief, MomdpModel

DEFAULT_EPS_TIE = 1e-6


class HorizonError(ValueError):
    """Raised for queries outside the solved horizon."""


@dataclass(frozen=True)
class ValueTables:
    """Solved value tables for one goal set, horizon, and frozen belief.

    v_reach[t, s] and v_cost[t, s] are indexed by absolute time 0..horizon.
    """

    model: MomdpModel
    goal: frozenset[int]
    horizon: int
    frozen_belief: Belief
    v_reach: np.ndarray
    v_cost: np.ndarray
    eps_tie: float

    def trans_b(self) -> np.ndarray:
        """Belief-averaged transition P_b[s, a, s']."""
        return np.tensordot(self.model.trans_s, self.frozen_belief.probs,
                            axes=([2], [0]))


@dataclass(frozen=True)
class PolicyQuery:
    t: int
    s: int
    eps_tie: float = DEFAULT_EPS_TIE

    def __post_init__(self):
        if self.eps_tie <= 0.0:
            raise ValueError("eps_tie must be positive")


def _averaged_cost(model: MomdpModel, belief: Belief) -> np.ndarray:
    """Observation-averaged cost Jbar[s, a, s'].

    The observation distribution at s' is the one implied by obs_fn under the
    frozen belief.
    """
    # P(o | s', a) = sum_e obs_fn[s', e, a, o] b(e)
    obs_mix = np.tensordot(model.obs_fn, belief.probs, axes=([1], [0]))  # (S, A, O)
    return np.einsum("sapo,pao->sap", model.cost, obs_mix)


def solve_values(model: MomdpModel, goal: frozenset[int] | set[int], t_f: int,
                 b: Belief, eps_tie: float = DEFAULT_EPS_TIE) -> ValueTables:
    """Backward recursion for V_G and V_J under the frozen belief b.

    Goal states absorb: reach value 1 at every time, zero further cost.
    An empty goal set is allowed and yields V_G identically 0.
    """
    if t_f < 1:
        raise ValueError("horizon must be at least 1")
    goal = frozenset(goal)
    S = model.num_states
    goal_mask = np.zeros(S, dtype=bool)
    goal_mask[list(goal)] = True

    p_b = np.tensordot(model.trans_s, b.probs, axes=([2], [0]))  # (S, A, S)
    j_bar = _averaged_cost(model, b)  # (S, A, S)

    v_reach = np.zeros((t_f + 1, S))
    v_cost = np.zeros((t_f + 1, S))
    v_reach[t_f, goal_mask] = 1.0

    for t in range(t_f - 1, -1, -1):
        q_reach = p_b @ v_reach[t + 1]  # (S, A)
        q_cost = np.einsum("sap,sap->sa", p_b, v_cost[t + 1][None, None, :] - j_bar)
        best_reach = q_reach.max(axis=1)
        tied = q_reach >= (best_reach[:, None] - eps_tie)
        best_cost = np.where(tied, q_cost, -np.inf).max(axis=1)
        v_reach[t] = np.where(goal_mask, 1.0, best_reach)
        v_cost[t] = np.where(goal_mask, 0.0, best_cost)

    return ValueTables(model=model, goal=goal, horizon=t_f, frozen_belief=b,
                       v_reach=v_reach, v_cost=v_cost, eps_tie=eps_tie)


def policy_action(tables: ValueTables, q: PolicyQuery) -> int:
    """Greedy lexicographic action at (t, s): maximize the reach backup, then
    the cost backup among actions within eps_tie of the best reach; remaining
    ties break to the lowest action index."""
    if not 0 <= q.t <= tables.horizon:
        raise HorizonError(f"t={q.t} outside horizon 0..{tables.horizon}")
    if q.s in tables.goal or q.t == tables.horizon:
        return tables.model.idle_action

    model = tables.model
    p_b = tables.trans_b()[q.s]  # (A, S)
    j_bar = _averaged_cost(model, tables.frozen_belief)[q.s]  # (A, S)
    q_reach = p_b @ tables.v_reach[q.t + 1]
    q_cost = (p_b * (tables.v_cost[q.t + 1][None, :] - j_bar)).sum(axis=1)
    tied = q_reach >= q_reach.max() - q.eps_tie
    q_cost = np.where(tied, q_cost, -np.inf)
    return int(np.argmax(q_cost))


def reach_probability(tables: ValueTables, t: int, s: int) -> float:
    """V_G(t, s); queries past the horizon clamp to 0 for non-goal states."""
    if t > tables.horizon:
        return 1.0 if s in tables.goal else 0.0
    return float(tables.v_reach[t, s])


def dump_tables(tables: ValueTables) -> str:
    """Tabular text dump of the value tables, keyed by (t, s)."""
    lines = [f"horizon={tables.horizon} goal={sorted(tables.goal)}"]
    lines.append("t\ts\tV_G\tV_J")
    for t in range(tables.horizon + 1):
        for s in range(tables.model.num_states):
            lines.append(f"{t}\t{s}\t{tables.v_reach[t, s]:.6f}\t{tables.v_cost[t, s]:.6f}")
    return "\n".join(lines)
