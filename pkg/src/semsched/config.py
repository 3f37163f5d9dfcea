"""Configuration dataclasses shared across the package, plus strict YAML loading.

Every knob that the simulator, the agents, or the harness consults lives here
so experiment specs can be hashed and reproduced. Unknown keys in a config
file are hard errors; silent typos in an experiment spec are worse than a
failed run.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for malformed or out-of-contract configuration values."""


# scheduling agents the harness knows how to run
KNOWN_AGENTS = ("tcppo", "ppo", "dqn", "random")

# named ablations of the constrained agent
KNOWN_ABLATIONS = ("no_shield", "no_cost_critics", "fixed_duals",
                   "reversed_shield_order")

SUPPORTED_N_UES = (8, 16)


@dataclass
class EnvConfig:
    """Simulator parameters: fleet size, radio grants, semantics, latency noise."""

    n_ues: int = 8
    episode_frames: int = 200           # 10 ms control frames per episode
    allow_any_n: bool = False           # lift the {8, 16} fleet-size gate

    # per-episode UE initialisation
    deadline_range_ms: tuple[float, float] = (6.0, 12.0)
    quality_init_range: tuple[float, float] = (0.5, 0.8)

    # semantic quality dynamics
    quality_decay: float = 0.008        # per frame, makes inaction costly
    gain_noise_sigma: float = 0.005
    fusion_eta: float = 0.5             # weight of human feedback in the fused score
    ewma_alpha: float = 0.2
    feedback_noise_sigma: float = 0.05
    feedback_tardiness: float = 0.5     # rating penalty per unit of deadline debt

    # reward shaping
    beta_u: float = 0.02                # compute-penalty weight
    beta_delta: float = 0.5             # deadline-debt weight
    weights: tuple[float, ...] | None = None   # per-UE priorities, uniform if None

    # feedback queue and arrivals
    q_max_ms: float = 20.0
    arrival_prob: float = 0.3
    arrival_mean_ms: float = 1.0

    # per-UE channel quality, AR(1) in [0, 1]
    channel_mean: float = 0.8
    channel_persistence: float = 0.9
    channel_noise_sigma: float = 0.05

    # per-frame radio grant draw
    numerologies: tuple[int, ...] = (0, 1, 2)
    minislot_symbols: tuple[int, ...] = (2, 4, 7)
    kappa_range: tuple[int, int] = (8, 20)
    t_ctrl_mean_ms: float = 0.1
    t_ctrl_sigma_ms: float = 0.02

    # latency perturbation coefficients
    congestion_coeff: float = 0.5
    jitter_sigma: float = 0.05
    jitter_cap_sigmas: float = 3.0      # upper truncation, keeps realizations bounded
    fading_coeff: float = 0.5

    def validate(self) -> None:
        if not self.allow_any_n and self.n_ues not in SUPPORTED_N_UES:
            raise ConfigError(
                f"n_ues={self.n_ues} is outside the supported fleet sizes "
                f"{set(SUPPORTED_N_UES)}; set allow_any_n to override")
        if self.n_ues < 1:
            raise ConfigError("n_ues must be positive")
        if self.episode_frames < 1:
            raise ConfigError("episode_frames must be positive")
        lo, hi = self.deadline_range_ms
        if not (0.0 < lo <= hi):
            raise ConfigError("deadline_range_ms must be positive and ordered")
        qlo, qhi = self.quality_init_range
        if not (0.0 <= qlo <= qhi <= 1.0):
            raise ConfigError("quality_init_range must sit inside [0, 1]")
        if not (0.0 < self.ewma_alpha <= 1.0):
            raise ConfigError("ewma_alpha must lie in (0, 1]")
        if not (0.0 <= self.fusion_eta <= 1.0):
            raise ConfigError("fusion_eta must lie in [0, 1]")
        if self.weights is not None and len(self.weights) != self.n_ues:
            raise ConfigError("weights length must match n_ues")
        if self.q_max_ms <= 0:
            raise ConfigError("q_max_ms must be positive")
        if not (0.0 <= self.arrival_prob <= 1.0):
            raise ConfigError("arrival_prob must lie in [0, 1]")
        if not (0.0 <= self.channel_persistence < 1.0):
            raise ConfigError("channel_persistence must lie in [0, 1)")
        for mu in self.numerologies:
            if mu not in (0, 1, 2):
                raise ConfigError(f"unsupported numerology {mu}")
        for n_sym in self.minislot_symbols:
            if n_sym not in (2, 4, 7):
                raise ConfigError(f"unsupported minislot length {n_sym}")
        k0, k1 = self.kappa_range
        if not (1 <= k0 <= k1):
            raise ConfigError("kappa_range must be ordered and positive")
        for name in ("quality_decay", "gain_noise_sigma", "feedback_noise_sigma",
                     "feedback_tardiness", "beta_u", "beta_delta",
                     "arrival_mean_ms", "channel_noise_sigma", "t_ctrl_mean_ms",
                     "t_ctrl_sigma_ms", "congestion_coeff", "jitter_sigma",
                     "jitter_cap_sigmas", "fading_coeff"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @property
    def t_avail_max_ms(self) -> float:
        """Largest possible grant window, used to normalize observations."""
        best_sym = min(self.numerologies)       # lowest numerology, longest symbols
        t_sym = (1.0 / 2 ** best_sym) / 14.0
        return self.kappa_range[1] * max(self.minislot_symbols) * t_sym


@dataclass
class ShieldConfig:
    """Safety-layer settings: fallback ladder and latency predictor mode."""

    enabled: bool = True
    # lightness ladder by profiled end-to-end latency, heaviest first
    fallback_order: tuple[str, ...] = (
        "full_retrain", "feat_refine", "deploy_cached", "light_adapt", "noop")
    predictor: str = "nominal"          # "nominal" (bounded) or "oracle" (clairvoyant)

    def validate(self) -> None:
        if self.predictor not in ("nominal", "oracle"):
            raise ConfigError(f"unknown predictor mode {self.predictor!r}")
        if len(self.fallback_order) != 5 or self.fallback_order[-1] != "noop":
            raise ConfigError("fallback_order must list all five primitives, noop last")


@dataclass
class TrainConfig:
    """Constrained PPO hyperparameters."""

    updates: int = 120
    rollout_frames: int = 64
    minibatch_size: int = 256           # capped at the rollout length in practice
    epochs: int = 32
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coeff: float = 0.01
    lr: float = 3e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    dual_step: float = 1e-3
    dual_ema: float = 0.9
    log_ratio_clip: float = 20.0
    hidden_widths: tuple[int, ...] = (256, 128)
    # keep the executed (shielded) action's log-prob for the ratio by default;
    # flip to score the raw pre-shield sample instead
    ratio_on_raw_action: bool = False
    # constants used when duals are frozen or cost critics are disabled
    fixed_lambdas: tuple[float, float] = (0.02, 0.0)

    def validate(self) -> None:
        if self.updates < 1 or self.rollout_frames < 1:
            raise ConfigError("updates and rollout_frames must be positive")
        if self.minibatch_size < 1 or self.epochs < 1:
            raise ConfigError("minibatch_size and epochs must be positive")
        for name in ("gamma", "gae_lambda"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.clip_eps <= 0 or self.lr <= 0 or self.dual_step < 0:
            raise ConfigError("clip_eps and lr must be positive, dual_step nonnegative")
        if not (0.0 <= self.dual_ema < 1.0):
            raise ConfigError("dual_ema must lie in [0, 1)")
        if len(self.hidden_widths) < 1:
            raise ConfigError("hidden_widths must name at least one layer")


@dataclass
class DqnConfig:
    """Template-action DQN baseline hyperparameters."""

    replay_capacity: int = 50_000
    batch_size: int = 256
    target_sync_every: int = 200
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    lr: float = 5e-4
    gamma: float = 0.99
    warmup_frames: int = 256
    hidden_widths: tuple[int, ...] = (256, 128)
    shielded: bool = True
    # under-utilisation shaping: fixed deduction when a nonzero window is
    # left mostly idle, never applied to frames with no window at all
    underutil_penalty: float = 0.2
    ric_floor_frac: float = 0.6
    air_floor_ms: float = 0.5

    def validate(self) -> None:
        if self.replay_capacity < self.batch_size:
            raise ConfigError("replay_capacity must hold at least one batch")
        if not (0.0 <= self.epsilon_final <= self.epsilon_start <= 1.0):
            raise ConfigError("epsilon schedule must run downward within [0, 1]")
        if self.target_sync_every < 1:
            raise ConfigError("target_sync_every must be positive")
        if self.lr <= 0 or not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("lr must be positive and gamma within [0, 1]")


@dataclass
class AblationFlags:
    """Switches that remove one mechanism at a time from the constrained agent."""

    no_shield: bool = False
    no_cost_critics: bool = False
    fixed_duals: bool = False
    reversed_shield_order: bool = False

    def active(self) -> tuple[str, ...]:
        return tuple(name for name in KNOWN_ABLATIONS if getattr(self, name))

    def label(self) -> str:
        active = self.active()
        return "+".join(active) if active else "none"


@dataclass
class ExperimentSpec:
    """Everything the harness needs to reproduce one experiment grid."""

    scenario: str = "n8"
    agents: tuple[str, ...] = ("tcppo", "ppo", "dqn", "random")
    seeds: tuple[int, ...] = (42, 43, 44, 45, 46)
    eval_episodes: int = 30
    eval_only: bool = False
    workers: int = 1
    out_dir: str = "runs/n8"
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    shield: ShieldConfig = field(default_factory=ShieldConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def validate(self) -> None:
        if not self.agents:
            raise ConfigError("agents list is empty")
        for agent in self.agents:
            if agent not in KNOWN_AGENTS:
                raise ConfigError(f"unknown agent {agent!r}; known: {KNOWN_AGENTS}")
        if len(set(self.agents)) != len(self.agents):
            raise ConfigError("agents list has duplicates")
        if not self.seeds:
            raise ConfigError("seeds list is empty")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        self.env.validate()
        self.train.validate()
        self.dqn.validate()
        self.shield.validate()


# ---------- strict construction from nested dicts ----------

_TUPLE_FIELDS = {
    "deadline_range_ms", "quality_init_range", "weights", "numerologies",
    "minislot_symbols", "kappa_range", "adam_betas", "hidden_widths",
    "fixed_lambdas", "fallback_order", "agents", "seeds",
}


def _build(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value in section {where!r}: {exc}") from exc


_SECTIONS = {
    "env": EnvConfig,
    "train": TrainConfig,
    "dqn": DqnConfig,
    "shield": ShieldConfig,
    "ablation": AblationFlags,
}


def spec_from_dict(data: dict[str, Any]) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known_top = set(_SECTIONS) | {"experiment"}
    unknown = set(data) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")
    exp_fields = data.get("experiment", {})
    if not isinstance(exp_fields, dict):
        raise ConfigError("section 'experiment' must be a mapping")
    nested = {name: _build(cls, data.get(name, {}), name)
              for name, cls in _SECTIONS.items()}
    spec = _build(ExperimentSpec, {**exp_fields, **nested}, "experiment")
    spec.validate()
    return spec


def load_spec(path: str) -> ExperimentSpec:
    """Parse and validate a YAML experiment spec."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return spec_from_dict(raw)


def spec_to_dict(spec: ExperimentSpec) -> dict[str, Any]:
    """Canonical nested-dict form, round-trippable through spec_from_dict."""
    out: dict[str, Any] = {"experiment": {}}
    for f in fields(ExperimentSpec):
        value = getattr(spec, f.name)
        if f.name in _SECTIONS:
            out[f.name] = dataclasses.asdict(value)
        else:
            out["experiment"][f.name] = value
    return out


def config_hash(spec: ExperimentSpec) -> str:
    """Stable digest over every config field; changes iff any field changes."""

    def canon(obj):
        if isinstance(obj, dict):
            return {k: canon(v) for k, v in sorted(obj.items())}
        if isinstance(obj, (list, tuple)):
            return [canon(v) for v in obj]
        return obj

    payload = json.dumps(canon(spec_to_dict(spec)), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
