"""Decentralized multi-robot task allocation and path planning.

Tasks are finite-horizon reach problems on a shared mixed-observability
grid-world model; allocation maximizes the fleet's expected pure reward
(reward minus cost) with max-sum message passing on a factor graph, and
nearby agents resolve conflicts with a depth-limited forward DP.
"""

from .momdp import (ACTION_EAST, ACTION_IDLE, ACTION_NORTH, ACTION_SOUTH,
                    ACTION_WEST, Belief, BeliefUpdateError, GridWorldSpec,
                    MomdpModel, adjacent_states, belief_update,
                    build_grid_momdp, observation_likelihood, validate_model)
from .values import (PolicyQuery, ValueTables, policy_action,
                     reach_probability, solve_values)
from .tasks import (AllocationProblem, Task, candidate_filter,
                    expected_pure_reward, marginal_reward, poisson_binomial,
                    update_task_set)
from .maxsum import (FactorGraph, MessageTable, build_factor_graph,
                     decode_assignment, run_maxsum)
from .resolution import (AgentPlanInput, ResolutionError,
                         build_adjacency_partition, forward_dp, select_host)
from .sim import RngStreams, ScenarioOutcome, Simulator, WorldState, run_episode
from .scenario import (RandomTaskConfig, ScenarioConfig, ScenarioError,
                       SimParams, TaskConfig, UncertainCellConfig,
                       load_scenario, save_scenario)

__version__ = "0.1.0"
