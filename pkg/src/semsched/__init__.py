"""Latency-aware scheduling of model adaptations over a shared control plane.

A numpy-first library: a closed-loop fleet-adaptation simulator with radio
grant windows, a feasibility shield that repairs unsafe scheduling actions,
and a constrained PPO agent plus value-based and random baselines, wired
into a reproducible experiment harness.
"""
from .config import (
    AblationFlags,
    ConfigError,
    DqnConfig,
    EnvConfig,
    ExperimentSpec,
    ShieldConfig,
    TrainConfig,
    config_hash,
    load_spec,
)
from .env import AdaptationEnv, CostVector, StepInfo
from .latency import (
    GrantAllocation,
    LatencyComponents,
    Primitive,
    available_window,
    component_table,
    nominal_latency,
    perturbed_latency,
    slack_and_debt,
    slot_timing,
)
from .nn import Adam, Mlp, load_checkpoint, save_checkpoint
from .shield import (
    Action,
    FeasibilityContext,
    ProjectionReport,
    fallback_ladder,
    is_feasible,
    project,
    urgency_order,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags", "Action", "AdaptationEnv", "Adam", "ConfigError",
    "CostVector", "DqnConfig", "EnvConfig", "ExperimentSpec",
    "FeasibilityContext", "GrantAllocation", "LatencyComponents", "Mlp",
    "Primitive", "ProjectionReport", "ShieldConfig", "StepInfo",
    "TrainConfig", "available_window", "component_table", "config_hash",
    "fallback_ladder", "is_feasible", "load_checkpoint", "load_spec",
    "nominal_latency", "perturbed_latency", "project", "save_checkpoint",
    "slack_and_debt", "slot_timing", "urgency_order",
]
