"""Curriculum-driven multi-agent path-finding reinforcement learning.

A gridworld multi-agent path-finding environment with collision-to-wait
dynamics, a confidence-gated reverse goal curriculum, a centralized-training
/ decentralized-execution learner (shared PPO actor with a monotonically
mixed utility critic), exact small-instance solvers, and a seeded,
reproducible experiment harness.
"""

from .checks import CHECKS, CheckResult
from .curriculum import (
    AllocationError,
    CurriculumConfig,
    CurriculumState,
    EpochStats,
    completion_rate,
    epoch_update,
    sample_goals,
)
from .env import (
    ACTION_DELTAS,
    DEFAULT_HORIZON,
    EAST,
    FOV,
    NORTH,
    NUM_ACTIONS,
    OBS_SIZE,
    SOUTH,
    WAIT,
    WEST,
    EnvState,
    Instance,
    InstanceError,
    ObservationEncoder,
    StepResult,
    Trajectory,
    encode_observation,
    replay_plan,
    reset,
    resolve_moves,
    step,
    transition,
)
from .grid import (
    GridMap,
    MapFormatError,
    MapSpec,
    Position,
    bfs_distance,
    bfs_field,
    chebyshev,
    component_count,
    generate_random_map,
    manhattan,
    parse_movingai,
    serialize_movingai,
)
from .harness import (
    ActorPolicy,
    EvalReport,
    PlanPolicy,
    ScriptedShortestPathPolicy,
    SuiteSpec,
    evaluate,
    generate_test_suite,
    load_checkpoint,
    rollout_policy,
    run_training,
    save_checkpoint,
)
from .learner import (
    CRITIC_INDEPENDENT,
    CRITIC_QMIX,
    MixerNet,
    ModelBundle,
    TrainConfig,
    build_models,
    compute_returns,
    counterfactual_advantage,
    make_optimizers,
    model_summary,
    train_epoch,
)
from .nn import Adam, DenseNet, load_net, save_net
from .oracle import (
    JointSearchLimit,
    OracleResult,
    SearchLimitError,
    flowtime_lower_bound,
    optimal_flowtime,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_DELTAS",
    "Adam",
    "ActorPolicy",
    "AllocationError",
    "CHECKS",
    "CRITIC_INDEPENDENT",
    "CRITIC_QMIX",
    "CheckResult",
    "CurriculumConfig",
    "CurriculumState",
    "DEFAULT_HORIZON",
    "DenseNet",
    "EAST",
    "EnvState",
    "EpochStats",
    "EvalReport",
    "FOV",
    "GridMap",
    "Instance",
    "InstanceError",
    "JointSearchLimit",
    "MapFormatError",
    "MapSpec",
    "MixerNet",
    "ModelBundle",
    "NORTH",
    "NUM_ACTIONS",
    "OBS_SIZE",
    "ObservationEncoder",
    "OracleResult",
    "PlanPolicy",
    "Position",
    "SOUTH",
    "ScriptedShortestPathPolicy",
    "SearchLimitError",
    "StepResult",
    "SuiteSpec",
    "TrainConfig",
    "Trajectory",
    "WAIT",
    "WEST",
    "bfs_distance",
    "bfs_field",
    "build_models",
    "chebyshev",
    "completion_rate",
    "component_count",
    "compute_returns",
    "counterfactual_advantage",
    "encode_observation",
    "epoch_update",
    "evaluate",
    "flowtime_lower_bound",
    "generate_random_map",
    "generate_test_suite",
    "load_checkpoint",
    "load_net",
    "make_optimizers",
    "manhattan",
    "model_summary",
    "optimal_flowtime",
    "parse_movingai",
    "replay_plan",
    "reset",
    "resolve_moves",
    "rollout_policy",
    "run_training",
    "sample_goals",
    "save_checkpoint",
    "save_net",
    "serialize_movingai",
    "step",
    "train_epoch",
    "transition",
    "__version__",
]
