"""Constrained PPO for window-aware adaptation scheduling.

The policy factors into a categorical head over primitives and independent
Bernoulli heads over UEs. A clipped surrogate maximizes reward advantages
while Lagrange multipliers, adapted by smoothed dual ascent, price the two
cost signals: controller compute against the average grant window, and
deadline overrun against zero.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import AblationFlags, EnvConfig, ShieldConfig, TrainConfig
from .env import FRAME_MS, AdaptationEnv
from .latency import Primitive
from .nn import Adam, Mlp
from .shield import Action, project


# ---------- generalized advantage estimation ----------

def gae(values, signals, gamma: float, lam: float, dones=None):
    """Advantages and regression targets from a value trace.

    `values` has one more entry than `signals` (the bootstrap); a done flag
    cuts both the bootstrap and the accumulation at episode boundaries.
    """
    values = np.asarray(values, dtype=float)
    signals = np.asarray(signals, dtype=float)
    horizon = signals.size
    if values.size != horizon + 1:
        raise ValueError("values must include one bootstrap entry")
    cont = (np.ones(horizon) if dones is None
            else 1.0 - np.asarray(dones, dtype=float))
    adv = np.zeros(horizon)
    running = 0.0
    for t in range(horizon - 1, -1, -1):
        delta = signals[t] + gamma * values[t + 1] * cont[t] - values[t]
        running = delta + gamma * lam * cont[t] * running
        adv[t] = running
    return adv, adv + values[:-1]


# ---------- factored policy head ----------

def _log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def policy_log_prob(logits, primitive, mask):
    """Log-density of (primitive, mask) pairs under factored logits, (B,)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    primitive = np.asarray(primitive, dtype=int)
    mask = np.atleast_2d(np.asarray(mask, dtype=float))
    lp_prim = _log_softmax(logits[:, :5])[np.arange(primitive.size), primitive]
    zb = logits[:, 5:]
    log_sig = -np.logaddexp(0.0, -zb)
    log_one_minus = -np.logaddexp(0.0, zb)
    lp_bits = (mask * log_sig + (1.0 - mask) * log_one_minus).sum(axis=1)
    return lp_prim + lp_bits


def sample_action(logits, rng: np.random.Generator):
    """Draw (Action, log_prob). A no-op draw forces the empty mask, and the
    log-prob scores that realized all-false mask."""
    logits = np.asarray(logits, dtype=float)
    n = logits.size - 5
    p = _softmax(logits[None, :5])[0]
    u = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    u = min(u, 4)
    if Primitive(u) == Primitive.NOOP:
        mask = np.zeros(n, dtype=bool)
    else:
        sig = 1.0 / (1.0 + np.exp(-logits[5:]))
        mask = rng.random(n) < sig
    logp = float(policy_log_prob(logits[None, :], np.array([u]),
                                 mask[None, :].astype(float))[0])
    return Action(Primitive(u), mask), logp


def greedy_action(logits) -> Action:
    logits = np.asarray(logits, dtype=float)
    u = Primitive(int(np.argmax(logits[:5])))
    n = logits.size - 5
    mask = np.zeros(n, dtype=bool) if u == Primitive.NOOP else logits[5:] > 0.0
    return Action(u, mask)


def factored_entropy(logits):
    """Entropy of the factored distribution per batch row, (B,)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    logp = _log_softmax(logits[:, :5])
    h_cat = -(np.exp(logp) * logp).sum(axis=1)
    zb = logits[:, 5:]
    log_sig = -np.logaddexp(0.0, -zb)
    log_one_minus = -np.logaddexp(0.0, zb)
    sig = np.exp(log_sig)
    h_bits = -(sig * log_sig + (1.0 - sig) * log_one_minus).sum(axis=1)
    return h_cat + h_bits


# ---------- losses ----------

def policy_loss(logits, primitive, mask, old_logp, adv_reward, adv_cost1,
                adv_cost2, lambdas, clip_eps: float = 0.2,
                entropy_coeff: float = 0.01, log_ratio_clip: float = 20.0):
    """Clipped cost-penalized surrogate; returns (loss, dlogits, stats).

    The reward term is the usual pessimistic min over the raw and clipped
    ratio; the priced cost advantages ride the raw ratio. An entropy bonus
    keeps both heads explorative. dlogits is the exact gradient of the
    scalar loss w.r.t. the logits, ready to feed a network backward pass.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    primitive = np.asarray(primitive, dtype=int)
    mask = np.atleast_2d(np.asarray(mask, dtype=float))
    old_logp = np.asarray(old_logp, dtype=float)
    adv_reward = np.asarray(adv_reward, dtype=float)
    adv_cost1 = np.asarray(adv_cost1, dtype=float)
    adv_cost2 = np.asarray(adv_cost2, dtype=float)
    lam1, lam2 = float(lambdas[0]), float(lambdas[1])
    batch = logits.shape[0]

    logp = policy_log_prob(logits, primitive, mask)
    log_ratio = logp - old_logp
    inside = np.abs(log_ratio) < log_ratio_clip     # clip kills the gradient
    ratio = np.exp(np.clip(log_ratio, -log_ratio_clip, log_ratio_clip))
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    take_raw = ratio * adv_reward <= clipped * adv_reward
    reward_term = np.where(take_raw, ratio * adv_reward, clipped * adv_reward)
    cost_price = lam1 * adv_cost1 + lam2 * adv_cost2
    surrogate = reward_term - cost_price * ratio
    entropy = factored_entropy(logits)
    loss = float(-surrogate.mean() - entropy_coeff * entropy.mean())

    # gradient through the surrogate: the clipped branch is flat in ratio
    dsurr_dratio = np.where(take_raw, adv_reward, 0.0) - cost_price
    dlogp = -(dsurr_dratio * ratio * inside) / batch

    p5 = _softmax(logits[:, :5])
    onehot = np.zeros_like(p5)
    onehot[np.arange(batch), primitive] = 1.0
    sig = 1.0 / (1.0 + np.exp(-logits[:, 5:]))
    dlogits = np.empty_like(logits)
    dlogits[:, :5] = dlogp[:, None] * (onehot - p5)
    dlogits[:, 5:] = dlogp[:, None] * (mask - sig)

    logp5 = _log_softmax(logits[:, :5])
    h_cat = -(np.exp(logp5) * logp5).sum(axis=1, keepdims=True)
    log_sig = -np.logaddexp(0.0, -logits[:, 5:])
    log_one_minus = -np.logaddexp(0.0, logits[:, 5:])
    dlogits[:, :5] += (entropy_coeff / batch) * p5 * (logp5 + h_cat)
    dlogits[:, 5:] += (-entropy_coeff / batch) * (
        sig * (1.0 - sig) * (log_one_minus - log_sig))

    stats = {
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(1.0 - take_raw.mean()),
        "entropy": float(entropy.mean()),
    }
    return loss, dlogits, stats


def critic_loss(preds, targets, heads=None):
    """Half mean squared error over selected heads, normalized by batch only."""
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    batch = preds.shape[0]
    selector = np.zeros(preds.shape[1])
    selector[list(heads if heads is not None else range(preds.shape[1]))] = 1.0
    err = (preds - targets) * selector
    loss = float(np.sum(err * err) / (2.0 * batch))
    return loss, err / batch


# ---------- dual ascent ----------

@dataclass(frozen=True)
class DualState:
    """Lagrange multipliers with their budgets and smoothing parameters."""

    lam1: float = 0.0
    lam2: float = 0.0
    budget1: float = 0.0
    budget2: float = 0.0
    step_size: float = 1e-3
    ema: float = 0.9


def dual_update(duals: DualState, mean_c1: float, mean_c2: float) -> DualState:
    """Projected subgradient step on each multiplier, then EMA smoothing.

    The raw step strictly increases a multiplier exactly when its constraint
    is violated; the smoothed value stays nonnegative as a convex blend.
    """
    raw1 = max(duals.lam1 + duals.step_size * (mean_c1 - duals.budget1), 0.0)
    raw2 = max(duals.lam2 + duals.step_size * (mean_c2 - duals.budget2), 0.0)
    return replace(duals,
                   lam1=duals.ema * duals.lam1 + (1.0 - duals.ema) * raw1,
                   lam2=duals.ema * duals.lam2 + (1.0 - duals.ema) * raw2)


# ---------- training and evaluation ----------

@dataclass
class TrainResult:
    rows: list[dict]
    policy: Mlp
    critic: Mlp
    duals: DualState


def policy_actor(net: Mlp):
    """Deployment-mode actor: greedy primitive and thresholded mask."""

    def act(obs, rng):
        logits, _ = net.forward(obs)
        return greedy_action(logits)

    return act


def train(env_cfg: EnvConfig, train_cfg: TrainConfig, shield_cfg: ShieldConfig,
          seed: int, agent: str = "tcppo",
          ablation: AblationFlags | None = None) -> TrainResult:
    """On-policy training loop; returns per-update metric rows and the nets.

    agent "tcppo" prices costs with adaptive duals; "ppo" fixes both
    multipliers at zero and leaves the cost heads untrained. Ablation flags
    selectively disable the shield (during collection), the cost critics
    (folding fixed-price costs into the reward signal), or dual adaptation.
    """
    if agent not in ("tcppo", "ppo"):
        raise ValueError(f"unknown agent {agent!r}")
    env_cfg.validate()
    train_cfg.validate()
    shield_cfg.validate()
    flags = ablation if ablation is not None else AblationFlags()
    constrained = agent == "tcppo"
    train_cost_heads = constrained and not flags.no_cost_critics
    adaptive_duals = (constrained and not flags.no_cost_critics
                      and not flags.fixed_duals)
    lam_fixed = train_cfg.fixed_lambdas
    shield_on = shield_cfg.enabled and not flags.no_shield

    env = AdaptationEnv(env_cfg)
    obs = env.reset(seed=[seed, 0])
    obs_dim = obs.size
    n = env_cfg.n_ues
    policy = Mlp([obs_dim, *train_cfg.hidden_widths, 5 + n],
                 np.random.default_rng([seed, 1]))
    critic = Mlp([obs_dim, *train_cfg.hidden_widths, 3],
                 np.random.default_rng([seed, 2]))
    agent_rng = np.random.default_rng([seed, 3])
    opt_policy = Adam(policy.parameters(), lr=train_cfg.lr,
                      betas=train_cfg.adam_betas, eps=train_cfg.adam_eps)
    opt_critic = Adam(critic.parameters(), lr=train_cfg.lr,
                      betas=train_cfg.adam_betas, eps=train_cfg.adam_eps)
    duals = DualState(step_size=train_cfg.dual_step, ema=train_cfg.dual_ema)
    # per-step compute cost is O(1) ms, per-step overrun cost can reach a
    # whole frame per straggler, so each head gets its own return scale
    horizon_scale = 1.0 / max(1.0 - train_cfg.gamma, 1e-3)
    c1_scale = horizon_scale
    c2_scale = FRAME_MS * horizon_scale
    window_sum = 0.0
    window_count = 0

    horizon = train_cfg.rollout_frames
    rows: list[dict] = []
    for update in range(train_cfg.updates):
        obs_buf = np.empty((horizon + 1, obs_dim))
        prim_buf = np.empty(horizon, dtype=int)
        mask_buf = np.empty((horizon, n))
        logp_buf = np.empty(horizon)
        rew_buf = np.empty(horizon)
        c1_buf = np.empty(horizon)
        c2_buf = np.empty(horizon)
        done_buf = np.zeros(horizon, dtype=bool)
        tavail_buf = np.empty(horizon)
        util_sum = 0.0
        air_sum = 0.0
        hits = 0
        scheduled = 0
        fallback_count = 0

        for t in range(horizon):
            obs_buf[t] = obs
            logits, _ = policy.forward(obs)
            raw, logp_raw = sample_action(logits, agent_rng)
            if shield_on:
                ctx = env.feasibility_context(shield_cfg.predictor)
                action, report = project(ctx, raw, shield_cfg)
                if report.fallbacks:
                    fallback_count += 1
            else:
                action = raw
            if train_cfg.ratio_on_raw_action:
                stored, stored_logp = raw, logp_raw
            elif (action.primitive == raw.primitive
                  and np.array_equal(action.mask, raw.mask)):
                stored, stored_logp = action, logp_raw
            else:
                stored = action
                stored_logp = float(policy_log_prob(
                    logits[None, :], np.array([int(action.primitive)]),
                    action.mask[None, :].astype(float))[0])
            tavail_buf[t] = env.t_avail_ms
            obs, reward, costs, done, info = env.step(action)
            prim_buf[t] = int(stored.primitive)
            mask_buf[t] = stored.mask.astype(float)
            logp_buf[t] = stored_logp
            rew_buf[t] = reward
            c1_buf[t] = costs.ric_time_ms
            c2_buf[t] = costs.violation_ms
            done_buf[t] = done
            util_sum += float(env.utility_ema.mean())
            air_sum += info.air_overhead_ms
            hits += int(info.hits.sum())
            scheduled += info.n_scheduled
            if done:
                obs = env.reset()
        obs_buf[horizon] = obs
        window_sum += float(tavail_buf.sum())
        window_count += horizon

        values, _ = critic.forward(obs_buf)
        zeros = np.zeros(horizon)
        if constrained and flags.no_cost_critics:
            # costs folded into the scalar signal at fixed prices
            shaped = rew_buf - lam_fixed[0] * c1_buf - lam_fixed[1] * c2_buf
            adv_r, ret_r = gae(values[:, 0], shaped, train_cfg.gamma,
                               train_cfg.gae_lambda, dones=done_buf)
            adv_c1, adv_c2 = zeros, zeros
            targets = np.stack([ret_r, zeros, zeros], axis=1)
            lam_surr = (0.0, 0.0)
        else:
            adv_r, ret_r = gae(values[:, 0], rew_buf, train_cfg.gamma,
                               train_cfg.gae_lambda, dones=done_buf)
            # cost heads predict returns divided by their scale so trunk
            # gradients stay commensurate with the reward head; GAE sees
            # the unscaled values
            adv_c1, ret_c1 = gae(values[:, 1] * c1_scale, c1_buf,
                                 train_cfg.gamma, train_cfg.gae_lambda,
                                 dones=done_buf)
            adv_c2, ret_c2 = gae(values[:, 2] * c2_scale, c2_buf,
                                 train_cfg.gamma, train_cfg.gae_lambda,
                                 dones=done_buf)
            targets = np.stack([ret_r, ret_c1 / c1_scale,
                                ret_c2 / c2_scale], axis=1)
            if not constrained:
                lam_surr = (0.0, 0.0)
            elif flags.fixed_duals:
                lam_surr = (float(lam_fixed[0]), float(lam_fixed[1]))
            else:
                lam_surr = (duals.lam1, duals.lam2)
        adv_r = (adv_r - adv_r.mean()) / (adv_r.std() + 1e-8)
        heads = (0, 1, 2) if train_cost_heads else (0,)

        batch = min(train_cfg.minibatch_size, horizon)
        for _ in range(train_cfg.epochs):
            order = (np.arange(horizon) if batch >= horizon
                     else agent_rng.permutation(horizon))
            for s in range(0, horizon, batch):
                idx = order[s:s + batch]
                preds, cache = critic.forward(obs_buf[idx])
                _, dpred = critic_loss(preds, targets[idx], heads=heads)
                opt_critic.step(critic.backward(cache, dpred))
        for _ in range(train_cfg.epochs):
            order = (np.arange(horizon) if batch >= horizon
                     else agent_rng.permutation(horizon))
            for s in range(0, horizon, batch):
                idx = order[s:s + batch]
                logits, cache = policy.forward(obs_buf[idx])
                _, dlogits, _ = policy_loss(
                    logits, prim_buf[idx], mask_buf[idx], logp_buf[idx],
                    adv_r[idx], adv_c1[idx], adv_c2[idx], lam_surr,
                    clip_eps=train_cfg.clip_eps,
                    entropy_coeff=train_cfg.entropy_coeff,
                    log_ratio_clip=train_cfg.log_ratio_clip)
                opt_policy.step(policy.backward(cache, dlogits))

        if adaptive_duals:
            duals = replace(duals, budget1=window_sum / window_count,
                            budget2=0.0)
            duals = dual_update(duals, float(c1_buf.mean()),
                                float(c2_buf.mean()))
        if constrained and (flags.fixed_duals or flags.no_cost_critics):
            lam_logged = (float(lam_fixed[0]), float(lam_fixed[1]))
        elif constrained:
            lam_logged = (duals.lam1, duals.lam2)
        else:
            lam_logged = (0.0, 0.0)

        rows.append({
            "index": update,
            "mean_reward": float(rew_buf.mean()),
            "mean_utility": util_sum / horizon,
            "air_overhead_ms": air_sum / horizon,
            "ric_ms": float(c1_buf.mean()),
            "hit_rate": (hits / scheduled) if scheduled else 1.0,
            "lambda1": lam_logged[0],
            "lambda2": lam_logged[1],
            "shield_fallback_count": fallback_count,
        })
    return TrainResult(rows=rows, policy=policy, critic=critic, duals=duals)


def evaluate(actor, env_cfg: EnvConfig, shield_cfg: ShieldConfig,
             episodes: int, seed: int, shield_enabled: bool = True) -> list[dict]:
    """Roll out full episodes with a fixed actor; one metrics row per episode."""
    env = AdaptationEnv(env_cfg)
    rows: list[dict] = []
    for ep in range(episodes):
        obs = env.reset(seed=[seed, 101, ep])
        rng = np.random.default_rng([seed, 3, ep])
        sums = {"reward": 0.0, "utility": 0.0, "air": 0.0, "ric": 0.0,
                "violation": 0.0}
        hits = 0
        scheduled = 0
        fallback_count = 0
        frames = 0
        done = False
        while not done:
            raw = actor(obs, rng)
            if shield_enabled:
                ctx = env.feasibility_context(shield_cfg.predictor)
                action, report = project(ctx, raw, shield_cfg)
                if report.fallbacks:
                    fallback_count += 1
            else:
                action = raw
            obs, reward, costs, done, info = env.step(action)
            sums["reward"] += reward
            sums["utility"] += float(env.utility_ema.mean())
            sums["air"] += info.air_overhead_ms
            sums["ric"] += costs.ric_time_ms
            sums["violation"] += costs.violation_ms
            hits += int(info.hits.sum())
            scheduled += info.n_scheduled
            frames += 1
        rows.append({
            "index": ep,
            "mean_reward": sums["reward"] / frames,
            "mean_utility": sums["utility"] / frames,
            "air_overhead_ms": sums["air"] / frames,
            "ric_ms": sums["ric"] / frames,
            "hit_rate": (hits / scheduled) if scheduled else 1.0,
            "violation_ms": sums["violation"] / frames,
            "shield_fallback_count": fallback_count,
        })
    return rows
