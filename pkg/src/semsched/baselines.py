"""Baseline schedulers: a template-action DQN and a shielded random agent.

The DQN flattens the factored action space into coarse templates (one
primitive applied to the k most urgent UEs) so a standard value learner can
cover it. An under-utilisation shaping term discourages leaving a nonzero
compute window idle; shaping touches only the replayed reward, metrics
always log the environment reward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DqnConfig, EnvConfig, ShieldConfig
from .env import AdaptationEnv, CostVector, StepInfo
from .latency import Primitive
from .nn import Adam, Mlp
from .shield import Action, project, urgency_order


def coverage_levels(n_ues: int) -> tuple[int, ...]:
    """Coarse fleet-coverage options: nobody, one, a quarter, half, everyone."""
    return (0, 1, math.ceil(n_ues / 4), math.ceil(n_ues / 2), n_ues)


def template_actions(n_ues: int) -> list[tuple[Primitive, int]]:
    """The flattened action table: every (primitive, coverage) pair."""
    levels = coverage_levels(n_ues)
    return [(prim, k) for prim in Primitive for k in levels]


def split_observation(obs, n_ues: int):
    """Per-UE feature block (n, 6) and the normalized window scalar."""
    obs = np.asarray(obs, dtype=float)
    return obs[: 6 * n_ues].reshape(n_ues, 6), float(obs[-1])


def realize_template(index: int, obs, n_ues: int) -> Action:
    """Instantiate template `index` on the current observation.

    Coverage picks the k most urgent UEs by the observed debt and backlog
    features; a no-op template always schedules nobody.
    """
    levels = coverage_levels(n_ues)
    prim = Primitive(index // len(levels))
    k = levels[index % len(levels)]
    mask = np.zeros(n_ues, dtype=bool)
    if prim == Primitive.NOOP or k == 0:
        return Action(prim, mask)
    per_ue, _ = split_observation(obs, n_ues)
    order = urgency_order(per_ue[:, 3], per_ue[:, 4])
    mask[order[:k]] = True
    return Action(prim, mask)


def underutil_penalty(costs: CostVector, info: StepInfo,
                      cfg: DqnConfig) -> float:
    """Shaping deduction for wasting a nonzero window; zero-window frames
    cannot be blamed for idling."""
    if info.t_avail_ms <= 0.0:
        return 0.0
    penalty = 0.0
    if costs.ric_time_ms < cfg.ric_floor_frac * info.t_avail_ms:
        penalty += cfg.underutil_penalty
    if info.air_overhead_ms < cfg.air_floor_ms:
        penalty += cfg.underutil_penalty
    return penalty


def random_actor(n_ues: int):
    """Uniform primitive, fair-coin UE mask; meant to run behind the shield."""

    def act(obs, rng: np.random.Generator) -> Action:
        u = Primitive(int(rng.integers(5)))
        if u == Primitive.NOOP:
            mask = np.zeros(n_ues, dtype=bool)
        else:
            mask = rng.random(n_ues) < 0.5
        return Action(u, mask)

    return act


def dqn_actor(qnet: Mlp, n_ues: int):
    """Greedy template selection from the trained value table."""

    def act(obs, rng: np.random.Generator) -> Action:
        qvals, _ = qnet.forward(obs)
        return realize_template(int(np.argmax(qvals)), obs, n_ues)

    return act


@dataclass
class DqnResult:
    rows: list[dict]
    qnet: Mlp


def train_dqn(env_cfg: EnvConfig, dqn_cfg: DqnConfig, shield_cfg: ShieldConfig,
              seed: int, total_frames: int, row_every: int = 64) -> DqnResult:
    """Frame-by-frame Q-learning over the template table.

    Epsilon decays linearly over the first half of the frame budget. One
    gradient step per frame once the warmup fills, with a periodically
    synced target network. Emits one aggregated metrics row per
    `row_every` frames so training series align across agents.
    """
    env_cfg.validate()
    dqn_cfg.validate()
    shield_cfg.validate()
    env = AdaptationEnv(env_cfg)
    obs = env.reset(seed=[seed, 0])
    obs_dim = obs.size
    n = env_cfg.n_ues
    n_actions = len(template_actions(n))
    qnet = Mlp([obs_dim, *dqn_cfg.hidden_widths, n_actions],
               np.random.default_rng([seed, 1]))
    target = Mlp(qnet.widths)
    for dst, src in zip(target.parameters(), qnet.parameters()):
        dst[...] = src
    agent_rng = np.random.default_rng([seed, 3])
    opt = Adam(qnet.parameters(), lr=dqn_cfg.lr)

    capacity = min(dqn_cfg.replay_capacity, total_frames)
    buf_obs = np.empty((capacity, obs_dim))
    buf_next = np.empty((capacity, obs_dim))
    buf_act = np.empty(capacity, dtype=int)
    buf_rew = np.empty(capacity)
    buf_done = np.empty(capacity)
    size = 0
    cursor = 0

    shield_on = shield_cfg.enabled and dqn_cfg.shielded
    half = max(total_frames // 2, 1)
    grad_steps = 0
    rows: list[dict] = []
    win = {"reward": 0.0, "utility": 0.0, "air": 0.0, "ric": 0.0}
    win_hits = 0
    win_scheduled = 0
    win_fallbacks = 0

    for frame in range(total_frames):
        frac = min(frame / half, 1.0)
        eps = dqn_cfg.epsilon_start + frac * (dqn_cfg.epsilon_final
                                              - dqn_cfg.epsilon_start)
        if agent_rng.random() < eps:
            idx = int(agent_rng.integers(n_actions))
        else:
            qvals, _ = qnet.forward(obs)
            idx = int(np.argmax(qvals))
        action = realize_template(idx, obs, n)
        if shield_on:
            ctx = env.feasibility_context(shield_cfg.predictor)
            action, report = project(ctx, action, shield_cfg)
            if report.fallbacks:
                win_fallbacks += 1
        next_obs, reward, costs, done, info = env.step(action)
        shaped = reward - underutil_penalty(costs, info, dqn_cfg)

        buf_obs[cursor] = obs
        buf_next[cursor] = next_obs
        buf_act[cursor] = idx
        buf_rew[cursor] = shaped
        buf_done[cursor] = float(done)
        cursor = (cursor + 1) % capacity
        size = min(size + 1, capacity)

        win["reward"] += reward
        win["utility"] += float(env.utility_ema.mean())
        win["air"] += info.air_overhead_ms
        win["ric"] += costs.ric_time_ms
        win_hits += int(info.hits.sum())
        win_scheduled += info.n_scheduled

        obs = env.reset() if done else next_obs

        if size >= min(dqn_cfg.warmup_frames, capacity):
            sample = agent_rng.integers(size, size=dqn_cfg.batch_size)
            next_q, _ = target.forward(buf_next[sample])
            bootstrap = (1.0 - buf_done[sample]) * next_q.max(axis=1)
            targets = buf_rew[sample] + dqn_cfg.gamma * bootstrap
            qvals, cache = qnet.forward(buf_obs[sample])
            taken = qvals[np.arange(dqn_cfg.batch_size), buf_act[sample]]
            dout = np.zeros_like(qvals)
            dout[np.arange(dqn_cfg.batch_size), buf_act[sample]] = (
                (taken - targets) / dqn_cfg.batch_size)
            opt.step(qnet.backward(cache, dout))
            grad_steps += 1
            if grad_steps % dqn_cfg.target_sync_every == 0:
                for dst, src in zip(target.parameters(), qnet.parameters()):
                    dst[...] = src

        if (frame + 1) % row_every == 0:
            rows.append({
                "index": len(rows),
                "mean_reward": win["reward"] / row_every,
                "mean_utility": win["utility"] / row_every,
                "air_overhead_ms": win["air"] / row_every,
                "ric_ms": win["ric"] / row_every,
                "hit_rate": (win_hits / win_scheduled) if win_scheduled else 1.0,
                "lambda1": 0.0,
                "lambda2": 0.0,
                "shield_fallback_count": win_fallbacks,
            })
            win = {"reward": 0.0, "utility": 0.0, "air": 0.0, "ric": 0.0}
            win_hits = 0
            win_scheduled = 0
            win_fallbacks = 0
    return DqnResult(rows=rows, qnet=qnet)
