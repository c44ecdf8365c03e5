import numpy as np
import pytest

from fleetplan.momdp import (ACTION_EAST, ACTION_IDLE, ACTION_WEST, Belief,
                             GridWorldSpec, build_grid_momdp)
from fleetplan.resolution import (AgentPlanInput, ResolutionError,
                                  build_adjacency_partition, forward_dp,
                                  select_host)
from fleetplan.values import solve_values

from oracles import best_joint_sequence


def mdp_belief():
    return Belief(np.array([1.0]))


def open_grid(width, height=1):
    spec = GridWorldSpec(width=width, height=height)
    plan = build_grid_momdp(spec, planning_mode=True)
    execute = build_grid_momdp(spec, planning_mode=False)
    return spec, plan, execute


class TestPartition:
    def test_distant_agents_are_singletons(self):
        spec, _, execute = open_grid(8)
        states = {1: spec.state_index((0, 0)), 2: spec.state_index((3, 0))}
        assert build_adjacency_partition(states, execute) == [[1], [2]]

    def test_distance_two_agents_share_a_component(self):
        spec, _, execute = open_grid(8)
        states = {1: spec.state_index((0, 0)), 2: spec.state_index((2, 0))}
        assert build_adjacency_partition(states, execute) == [[1, 2]]

    def test_chain_merges_transitively(self):
        # 1 and 3 are distance 4 apart but joined through 2
        spec, _, execute = open_grid(8)
        states = {1: spec.state_index((0, 0)), 2: spec.state_index((2, 0)),
                  3: spec.state_index((4, 0))}
        assert build_adjacency_partition(states, execute) == [[1, 2, 3]]

    def test_mixed_components(self):
        spec, _, execute = open_grid(9)
        states = {1: spec.state_index((0, 0)), 2: spec.state_index((2, 0)),
                  4: spec.state_index((8, 0))}
        assert build_adjacency_partition(states, execute) == [[1, 2], [4]]

    def test_host_is_lowest_id(self):
        assert select_host([4, 2, 9]) == 2
        with pytest.raises(ValueError):
            select_host([])


class TestForwardDp:
    def test_separable_agents_follow_their_policies(self):
        # far apart on a wide corridor with opposite goals: the joint plan
        # should just send each agent toward its own goal
        spec, plan, execute = open_grid(9)
        left = solve_values(plan, {spec.state_index((0, 0))}, 8, mdp_belief())
        right = solve_values(plan, {spec.state_index((8, 0))}, 8, mdp_belief())
        agents = [
            AgentPlanInput(1, spec.state_index((3, 0)), left, 10.0, 8),
            AgentPlanInput(2, spec.state_index((5, 0)), right, 10.0, 8),
        ]
        actions, _ = forward_dp(agents, execute, mdp_belief(), 0, 3)
        assert actions == {1: ACTION_WEST, 2: ACTION_EAST}

    def test_head_on_conflict_one_yields(self):
        # crossing goals on a 1-wide corridor: moving simultaneously toward
        # each other collides, so exactly one agent must give way
        spec, plan, execute = open_grid(5)
        right = solve_values(plan, {spec.state_index((4, 0))}, 8, mdp_belief())
        left = solve_values(plan, {spec.state_index((0, 0))}, 8, mdp_belief())
        agents = [
            AgentPlanInput(1, spec.state_index((1, 0)), right, 10.0, 8),
            AgentPlanInput(2, spec.state_index((3, 0)), left, 10.0, 8),
        ]
        actions, _ = forward_dp(agents, execute, mdp_belief(), 0, 3)
        moves = sorted(actions.values())
        assert moves != [ACTION_EAST, ACTION_WEST]  # not both pressing on

    def test_unassigned_blocker_steps_aside(self):
        # agent 2 idles on agent 1's goal with no task of its own; the DP
        # should find a joint plan where 1 still reaches its goal
        spec, plan, execute = open_grid(4, height=2)
        goal = spec.state_index((3, 0))
        tables = solve_values(plan, {goal}, 8, mdp_belief())
        agents = [
            AgentPlanInput(1, spec.state_index((1, 0)), tables, 10.0, 8),
            AgentPlanInput(2, goal),
        ]
        actions, value = forward_dp(agents, execute, mdp_belief(), 0, 3)
        oracle_first, oracle_value = best_joint_sequence(
            agents, execute, np.array([1.0]), 0, 3)
        assert value == pytest.approx(oracle_value, abs=1e-9)

    def test_coincident_starts_rejected(self):
        spec, plan, execute = open_grid(4)
        agents = [AgentPlanInput(1, 0), AgentPlanInput(2, 0)]
        with pytest.raises(ResolutionError):
            forward_dp(agents, execute, mdp_belief(), 0, 2)

    def test_zero_horizon_rejected(self):
        spec, plan, execute = open_grid(4)
        agents = [AgentPlanInput(1, 0), AgentPlanInput(2, 2)]
        with pytest.raises(ValueError):
            forward_dp(agents, execute, mdp_belief(), 0, 0)

    def test_swap_forbidden_when_enabled(self):
        # two adjacent agents with crossing goals on a 1-wide corridor can
        # never pass each other if swaps count as collisions
        spec, plan, execute = open_grid(4)
        right = solve_values(plan, {spec.state_index((3, 0))}, 8, mdp_belief())
        left = solve_values(plan, {spec.state_index((0, 0))}, 8, mdp_belief())
        agents = [
            AgentPlanInput(1, spec.state_index((1, 0)), right, 10.0, 8),
            AgentPlanInput(2, spec.state_index((2, 0)), left, 10.0, 8),
        ]
        actions, _ = forward_dp(agents, execute, mdp_belief(), 0, 2,
                                forbid_swaps=True)
        assert not (actions[1] == ACTION_EAST and actions[2] == ACTION_WEST)

    def test_deadline_inside_window_credits_and_releases(self):
        # the task window ends mid-look-ahead; afterwards the agent has no
        # terminal stake, so both idling at the goal and wandering cost-free
        # moves should price identically past the deadline
        spec, plan, execute = open_grid(5)
        goal = spec.state_index((4, 0))
        tables = solve_values(plan, {goal}, 8, mdp_belief())
        agents = [AgentPlanInput(1, spec.state_index((2, 0)), tables, 10.0, 2)]
        actions, value = forward_dp(agents, execute, mdp_belief(), 0, 4)
        oracle_first, oracle_value = best_joint_sequence(
            agents, execute, np.array([1.0]), 0, 4)
        assert value == pytest.approx(oracle_value, abs=1e-9)
        assert actions == {1: oracle_first[0]}


class TestAgainstEnumeration:
    def random_conflict(self, rng, spec, plan):
        """Two agents at distinct random cells with random goals/margins."""
        cells = rng.choice(spec.num_cells, size=2, replace=False)
        agents = []
        for idx, agent_id in enumerate((1, 2)):
            goal = int(rng.integers(spec.num_cells))
            tables = solve_values(plan, {goal}, 8, mdp_belief())
            agents.append(AgentPlanInput(agent_id, int(cells[idx]), tables,
                                         float(rng.uniform(0, 12)), 8))
        return agents

    @pytest.mark.parametrize("seed", range(12))
    def test_two_agent_values_match_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        spec = GridWorldSpec(width=3, height=2)
        plan = build_grid_momdp(spec, planning_mode=True)
        execute = build_grid_momdp(spec, planning_mode=False)
        agents = self.random_conflict(rng, spec, plan)
        try:
            actions, value = forward_dp(agents, execute, mdp_belief(), 0, 3)
        except ResolutionError:
            oracle = list(best_joint_sequence(agents, execute, np.array([1.0]),
                                              0, 3))
            assert oracle[0] is None
            return
        _, oracle_value = best_joint_sequence(agents, execute,
                                              np.array([1.0]), 0, 3)
        assert value == pytest.approx(oracle_value, abs=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_dominance_trim_preserves_value(self, seed):
        rng = np.random.default_rng(40 + seed)
        spec = GridWorldSpec(width=3, height=2)
        plan = build_grid_momdp(spec, planning_mode=True)
        execute = build_grid_momdp(spec, planning_mode=False)
        agents = self.random_conflict(rng, spec, plan)
        stats_on, stats_off = {}, {}
        a1, v1 = forward_dp(agents, execute, mdp_belief(), 0, 3,
                            trim_dominated=True, stats=stats_on)
        a2, v2 = forward_dp(agents, execute, mdp_belief(), 0, 3,
                            trim_dominated=False, stats=stats_off)
        assert v1 == pytest.approx(v2, abs=1e-9)
        assert a1 == a2
        assert stats_on["leaves"] <= stats_off["leaves"]

    def test_repeat_runs_are_bit_identical(self):
        rng = np.random.default_rng(99)
        spec = GridWorldSpec(width=3, height=2)
        plan = build_grid_momdp(spec, planning_mode=True)
        execute = build_grid_momdp(spec, planning_mode=False)
        agents = self.random_conflict(rng, spec, plan)
        first = forward_dp(agents, execute, mdp_belief(), 0, 3)
        second = forward_dp(agents, execute, mdp_belief(), 0, 3)
        assert first == second
