"""Two-agent general-sum continuous inverse optimal control."""
from .core import (
    AgentDynamics,
    AgentId,
    Dims,
    DynamicsModel,
    JointState,
    JointTrajectory,
    LinearizedDynamics,
    from_deviation,
    linearize,
    to_deviation,
)
from .errors import *  # noqa: F401,F403
from .recursion import (
    PolicySequence,
    QuadraticValue,
    StagePolicy,
    compute_precisions,
    gs_cioc_backward,
    m_cioc_backward,
    single_agent_cioc_backward,
    solve_stage_means,
    value_step,
)
from .rewards import QuadraticExpansion, RewardModel, WeightedTerm, taylor_expand
from .rollout import BatchStatistics, RolloutBatch, batch_statistics, mean_rollout, sample_rollouts, variance_ratio
from .scenarios import ScenarioConfig, build_group_goal_scenario, build_zebra_scenario, load_scenario

__version__ = "0.1.0"
