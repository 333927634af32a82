"""Sampling-based MPC with neural-ODE dynamics, asynchronous observations and ES meta-learning."""

from .errors import (
    AsyncMPCError,
    ConfigError,
    DegenerateInterval,
    EmptyDataset,
    EmptySchedule,
    GradientOverflow,
    InsufficientData,
    IntegrationDiverged,
    OrderingError,
    PlannerDegenerate,
    ShapeError,
    StepUnderflow,
)
from .ode import ActionSchedule, SolverSpec, grad_through_solve, integrate
from .models import (
    ModelParams,
    StateEstimate,
    TrainConfig,
    TrainingExample,
    init_node_params,
    init_rnn_params,
    load_params,
    node_loss,
    optimize_node,
    predict_state,
    save_params,
)
from .env import AsyncEnv, EnvParams, EpisodeConfig, IrregularityConfig, TimedEvent, sample_env, xi_estimate
from .planner import PlannerConfig, RewardSpec, cem_select, select_command, shoot_select
from .meta import EpisodeSetup, MetaConfig, acumen_train, meta_update, run_episode
from .harness import ExperimentConfig, load_config, run_ablation, traj_metrics

__version__ = "0.1.0"

__all__ = [
    "AsyncMPCError",
    "ConfigError",
    "DegenerateInterval",
    "EmptyDataset",
    "EmptySchedule",
    "GradientOverflow",
    "InsufficientData",
    "IntegrationDiverged",
    "OrderingError",
    "PlannerDegenerate",
    "ShapeError",
    "StepUnderflow",
    "ActionSchedule",
    "SolverSpec",
    "grad_through_solve",
    "integrate",
    "ModelParams",
    "StateEstimate",
    "TrainConfig",
    "TrainingExample",
    "init_node_params",
    "init_rnn_params",
    "load_params",
    "node_loss",
    "optimize_node",
    "predict_state",
    "save_params",
    "AsyncEnv",
    "EnvParams",
    "EpisodeConfig",
    "IrregularityConfig",
    "TimedEvent",
    "sample_env",
    "xi_estimate",
    "PlannerConfig",
    "RewardSpec",
    "cem_select",
    "select_command",
    "shoot_select",
    "EpisodeSetup",
    "MetaConfig",
    "acumen_train",
    "meta_update",
    "run_episode",
    "ExperimentConfig",
    "load_config",
    "run_ablation",
    "traj_metrics",
]
