"""Mixed-observability MDP model, beliefs, and the grid-world model builder.

The model is shared by every agent in the fleet: fully observable position
states s, partially observable environment states e (tracked by a belief),
dense probability tables, and a cost table. The grid-world builder produces
the concrete model used by the simulator: 5 actions (N, S, W, E, IDLE),
uncertain cells that may be blocked, and distance-banded observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

Cell = tuple[int, int]

ACTION_NORTH = 0
ACTION_SOUTH = 1
ACTION_WEST = 2
ACTION_EAST = 3
ACTION_IDLE = 4
ACTION_NAMES = ("N", "S", "W", "E", "IDLE")

# (dx, dy) per move action; y grows southward
_MOVE_DELTAS = {
    ACTION_NORTH: (0, -1),
    ACTION_SOUTH: (0, 1),
    ACTION_WEST: (-1, 0),
    ACTION_EAST: (1, 0),
}

_PROB_TOL = 1e-9


class BeliefUpdateError(ValueError):
    """Raised when an observation has zero likelihood under the belief."""


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class Belief:
    """Probability vector over the partially observable states E."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError("belief must be a 1-D probability vector")
        if np.any(probs < -_PROB_TOL) or abs(probs.sum() - 1.0) > _PROB_TOL:
            raise ValueError("belief entries must be >= 0 and sum to 1")

    def __len__(self) -> int:
        return len(self.probs)

    def key(self) -> bytes:
        """Stable hashable fingerprint, used for value-table caching."""
        return self.probs.tobytes()

    @staticmethod
    def uniform(n: int) -> "Belief":
        return Belief(np.full(n, 1.0 / n))

    @staticmethod
    def point(n: int, e: int) -> "Belief":
        probs = np.zeros(n)
        probs[e] = 1.0
        return Belief(probs)


@dataclass(frozen=True)
class MomdpModel:
    """Dense-table MOMDP shared by all agents.

    Table layouts (row-major numpy arrays):
      trans_s[s, a, e, s']  observable-state transition probabilities
      trans_e[s, e, a, e']  environment-state transition probabilities
      obs_fn[s', e, a, o]   observation probabilities (post-move state)
      cost[s, a, s', o]     transition cost
    """

    trans_s: np.ndarray
    trans_e: np.ndarray
    obs_fn: np.ndarray
    cost: np.ndarray
    idle_action: int

    @property
    def num_states(self) -> int:
        return self.trans_s.shape[0]

    @property
    def num_actions(self) -> int:
        return self.trans_s.shape[1]

    @property
    def num_env_states(self) -> int:
        return self.trans_s.shape[2]

    @property
    def num_observations(self) -> int:
        return self.obs_fn.shape[3]


def validate_model(model: MomdpModel) -> list[str]:
    """Check model invariants, returning a report of violations (empty = valid)."""
    report: list[str] = []
    S, A, E = model.num_states, model.num_actions, model.num_env_states
    O = model.num_observations

    if model.trans_s.shape != (S, A, E, S):
        report.append(f"trans_s has shape {model.trans_s.shape}, expected {(S, A, E, S)}")
    if model.trans_e.shape != (S, E, A, E):
        report.append(f"trans_e has shape {model.trans_e.shape}, expected {(S, E, A, E)}")
    if model.obs_fn.shape != (S, E, A, O):
        report.append(f"obs_fn has shape {model.obs_fn.shape}, expected {(S, E, A, O)}")
    if model.cost.shape != (S, A, S, O):
        report.append(f"cost has shape {model.cost.shape}, expected {(S, A, S, O)}")
    if report:
        return report

    for name, table in (("trans_s", model.trans_s), ("trans_e", model.trans_e),
                        ("obs_fn", model.obs_fn)):
        if np.any(table < -_PROB_TOL) or np.any(table > 1.0 + _PROB_TOL):
            report.append(f"{name} has entries outside [0, 1]")

    rows = model.trans_s.sum(axis=3)
    bad = np.argwhere(np.abs(rows - 1.0) > _PROB_TOL)
    for s, a, e in bad[:10]:
        report.append(f"trans_s row (s={s}, a={a}, e={e}) sums to {rows[s, a, e]:.6g}")
    rows = model.trans_e.sum(axis=3)
    bad = np.argwhere(np.abs(rows - 1.0) > _PROB_TOL)
    for s, e, a in bad[:10]:
        report.append(f"trans_e row (s={s}, e={e}, a={a}) sums to {rows[s, e, a]:.6g}")
    rows = model.obs_fn.sum(axis=3)
    bad = np.argwhere(np.abs(rows - 1.0) > _PROB_TOL)
    for s, e, a in bad[:10]:
        report.append(f"obs_fn row (s={s}, e={e}, a={a}) sums to {rows[s, e, a]:.6g}")

    idle = model.idle_action
    if not (0 <= idle < A):
        report.append(f"idle_action {idle} out of range")
        return report
    for s in range(S):
        if np.any(np.abs(model.trans_s[s, idle, :, s] - 1.0) > _PROB_TOL):
            report.append(f"idle action is not absorbing at s={s}")
        if np.any(np.abs(model.cost[s, idle, s, :]) > _PROB_TOL):
            report.append(f"idle action is not free at s={s}")
    return report


@dataclass(frozen=True)
class GridWorldSpec:
    """Grid-world layout and environment parameters.

    Uncertain cells are ordered; environment state e is a bitmask over them
    (bit i set = cell i occupied), so |E| = 2^len(uncertain_cells).
    """

    width: int
    height: int
    static_obstacles: frozenset[Cell] = frozenset()
    uncertain_cells: tuple[Cell, ...] = ()
    slip_prob: float = 0.1
    flip_prob: float = 0.05
    obs_bands: tuple[float, float, float] = (1.0, 0.8, 0.5)  # d<=1, d==2, d>2
    move_cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "static_obstacles", frozenset(tuple(c) for c in self.static_obstacles))
        object.__setattr__(self, "uncertain_cells", tuple(tuple(c) for c in self.uncertain_cells))
        for err in self.validate():
            raise ValueError(err)

    def validate(self) -> list[str]:
        errs = []
        if self.width < 1 or self.height < 1:
            errs.append("grid dimensions must be positive")
            return errs
        for c in self.static_obstacles:
            if not self.in_bounds(c):
                errs.append(f"static obstacle {c} out of bounds")
        seen = set()
        for c in self.uncertain_cells:
            if not self.in_bounds(c):
                errs.append(f"uncertain cell {c} out of bounds")
            if c in self.static_obstacles:
                errs.append(f"uncertain cell {c} overlaps a static obstacle")
            if c in seen:
                errs.append(f"uncertain cell {c} listed twice")
            seen.add(c)
        for name, p in (("slip_prob", self.slip_prob), ("flip_prob", self.flip_prob)):
            if not 0.0 <= p <= 1.0:
                errs.append(f"{name} must be in [0, 1], got {p}")
        if not all(0.0 <= p <= 1.0 for p in self.obs_bands):
            errs.append("observation band probabilities must be in [0, 1]")
        return errs

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    @property
    def num_env_states(self) -> int:
        return 1 << len(self.uncertain_cells)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def state_index(self, cell: Cell) -> int:
        x, y = cell
        return y * self.width + x

    def cell_of(self, s: int) -> Cell:
        return (s % self.width, s // self.width)

    def is_free(self, cell: Cell, e: int) -> bool:
        """Whether `cell` can be entered given environment state bitmask e."""
        if cell in self.static_obstacles:
            return False
        for i, uc in enumerate(self.uncertain_cells):
            if uc == cell and (e >> i) & 1:
                return False
        return True

    def band_prob(self, d: int) -> float:
        """P(o_i = e_i) for an uncertain cell at Manhattan distance d."""
        if d <= 1:
            return self.obs_bands[0]
        if d == 2:
            return self.obs_bands[1]
        return self.obs_bands[2]

    def move_target(self, cell: Cell, action: int, e: int) -> Cell:
        """Successor cell ignoring slip: blocked moves map to staying."""
        if action == ACTION_IDLE:
            return cell
        dx, dy = _MOVE_DELTAS[action]
        target = (cell[0] + dx, cell[1] + dy)
        if not self.in_bounds(target) or not self.is_free(target, e):
            return cell
        return target


def observation_likelihood(spec: GridWorldSpec, s: int, e: int, o: int) -> float:
    """P(o | s, e): product of per-cell band probabilities at state s."""
    cell = spec.cell_of(s)
    prob = 1.0
    for i, uc in enumerate(spec.uncertain_cells):
        p_correct = spec.band_prob(manhattan(cell, uc))
        agree = ((e >> i) & 1) == ((o >> i) & 1)
        prob *= p_correct if agree else 1.0 - p_correct
    return prob


def _env_transition_row(spec: GridWorldSpec, s: int) -> np.ndarray:
    """T_e(s, e, e') as an (E, E) matrix: cells within distance 2 of s are frozen."""
    E = spec.num_env_states
    cell = spec.cell_of(s)
    row = np.ones((E, E))
    for i, uc in enumerate(spec.uncertain_cells):
        frozen = manhattan(cell, uc) <= 2
        flip = 0.0 if frozen else spec.flip_prob
        e_bits = (np.arange(E)[:, None] >> i) & 1
        e2_bits = (np.arange(E)[None, :] >> i) & 1
        same = e_bits == e2_bits
        row *= np.where(same, 1.0 - flip, flip)
    return row


def _observation_matrix(spec: GridWorldSpec, s: int) -> np.ndarray:
    """O(s, e, o) as an (E, O) matrix of per-cell band products."""
    E = spec.num_env_states
    cell = spec.cell_of(s)
    mat = np.ones((E, E))
    for i, uc in enumerate(spec.uncertain_cells):
        p = spec.band_prob(manhattan(cell, uc))
        e_bits = (np.arange(E)[:, None] >> i) & 1
        o_bits = (np.arange(E)[None, :] >> i) & 1
        mat *= np.where(e_bits == o_bits, p, 1.0 - p)
    return mat


def build_grid_momdp(spec: GridWorldSpec, planning_mode: bool) -> MomdpModel:
    """Build the grid-world MOMDP.

    planning_mode=True injects a slip self-transition on the four move actions
    (the planner's hedge against being held back by conflict resolution);
    planning_mode=False gives the deterministic execution transitions.
    """
    S, E, A = spec.num_cells, spec.num_env_states, 5
    O = E

    trans_s = np.zeros((S, A, E, S))
    for s in range(S):
        cell = spec.cell_of(s)
        for a in range(A):
            for e in range(E):
                if a == ACTION_IDLE:
                    trans_s[s, a, e, s] = 1.0
                    continue
                target = spec.state_index(spec.move_target(cell, a, e))
                if planning_mode and target != s:
                    trans_s[s, a, e, target] = 1.0 - spec.slip_prob
                    trans_s[s, a, e, s] += spec.slip_prob
                else:
                    trans_s[s, a, e, target] = 1.0

    trans_e = np.zeros((S, E, A, E))
    obs_fn = np.zeros((S, E, A, O))
    for s in range(S):
        trans_e[s] = _env_transition_row(spec, s)[:, None, :]
        obs_fn[s] = _observation_matrix(spec, s)[:, None, :]

    cost = np.zeros((S, A, S, O))
    for a in range(A):
        if a != ACTION_IDLE:
            cost[:, a, :, :] = spec.move_cost

    return MomdpModel(trans_s=trans_s, trans_e=trans_e, obs_fn=obs_fn,
                      cost=cost, idle_action=ACTION_IDLE)


def belief_update(model: MomdpModel, b: Belief, s: int, a: int,
                  s_next: int, o: int) -> Belief:
    """Bayes update of the shared belief from one agent's transition.

    b'(e') proportional to O(s_next, e', a, o) * sum_e T_e(s, e, a, e') b(e).

    Raises BeliefUpdateError when the observation has zero likelihood, which
    indicates a model/scenario inconsistency the caller must handle.
    """
    predicted = model.trans_e[s, :, a, :].T @ b.probs
    posterior = model.obs_fn[s_next, :, a, o] * predicted
    z = posterior.sum()
    if z <= 0.0:
        raise BeliefUpdateError(
            f"observation o={o} has zero likelihood (s={s}, a={a}, s_next={s_next})")
    return Belief(posterior / z)


def adjacent_states(model: MomdpModel, s: int, s2: int) -> bool:
    """Whether two states can reach a common successor in one step."""
    # supp[e, s''] = reachable under any action
    supp1 = (model.trans_s[s] > 0.0).any(axis=0)
    supp2 = (model.trans_s[s2] > 0.0).any(axis=0)
    return bool(np.any(supp1 & supp2))
