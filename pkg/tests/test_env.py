"""Control-loop environment: dynamics ops, step bookkeeping, safety coupling."""
from __future__ import annotations

import numpy as np
import pytest

from semsched.config import ConfigError, EnvConfig, ShieldConfig
from semsched.env import (
    PRIMITIVE_CHI,
    PRIMITIVE_GAIN,
    AdaptationEnv,
    compute_costs,
    compute_reward,
    ewma_update,
    feedback_oracle,
    fuse_utility,
    queue_update,
    semantic_gain,
)
from semsched.latency import Primitive
from semsched.shield import Action, project


def quiet_config(**overrides) -> EnvConfig:
    """All stochastic terms disabled so steps are hand-checkable."""
    base = dict(
        n_ues=1, allow_any_n=True, episode_frames=10,
        deadline_range_ms=(6.0, 6.0), quality_init_range=(0.6, 0.6),
        jitter_sigma=0.0, gain_noise_sigma=0.0, feedback_noise_sigma=0.0,
        channel_noise_sigma=0.0, arrival_prob=0.0, t_ctrl_sigma_ms=0.0,
    )
    base.update(overrides)
    return EnvConfig(**base)


# ---------- dynamics ops ----------

def test_primitive_tables():
    assert PRIMITIVE_GAIN.tolist() == [0.028, 0.019, 0.011, 0.014, 0.0]
    assert PRIMITIVE_CHI.tolist() == [2.7, 1.6, 0.7, 0.9, 0.0]


def test_semantic_gain_examples():
    rng = np.random.default_rng(0)
    g = semantic_gain(Primitive.FULL_RETRAIN, True, 1.0, 1.0, rng,
                      noise_sigma=0.0, decay=0.008)
    assert abs(float(g) - 0.020) <= 1e-12
    g = semantic_gain(Primitive.FULL_RETRAIN, True, 0.0, 1.0, rng,
                      noise_sigma=0.0, decay=0.008)
    assert abs(float(g) - (-0.008)) <= 1e-12      # a fully late adaptation earns nothing
    g = semantic_gain(Primitive.FEAT_REFINE, False, 1.0, 1.0, rng,
                      noise_sigma=0.0, decay=0.008)
    assert abs(float(g) - (-0.008)) <= 1e-12


def test_feedback_oracle_examples():
    rng = np.random.default_rng(0)
    f = feedback_oracle(0.9, 0.0, rng, tardiness=0.5, noise_sigma=0.0)
    assert abs(float(f) - 0.9) <= 1e-12
    f = feedback_oracle(0.9, 1.0, rng, tardiness=0.5, noise_sigma=0.0)
    assert abs(float(f) - 0.4) <= 1e-12
    f = feedback_oracle(0.9, 3.0, rng, tardiness=0.5, noise_sigma=0.0)
    assert abs(float(f) - 0.4) <= 1e-12           # debt saturates at 1


def test_feedback_oracle_stays_in_unit_interval():
    rng = np.random.default_rng(1)
    vals = feedback_oracle(rng.uniform(0, 1, 1000), rng.uniform(0, 2, 1000), rng)
    assert (vals >= 0).all() and (vals <= 1).all()


def test_fuse_and_ewma():
    assert abs(fuse_utility(0.8, 0.4, 0.5) - 0.6) <= 1e-12
    assert abs(ewma_update(0.5, 1.0, 0.2) - 0.6) <= 1e-12
    with pytest.raises(ValueError):
        ewma_update(0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        ewma_update(0.5, 1.0, 1.5)


def test_queue_update_examples():
    assert abs(queue_update(5.0, 1.0, True, 2.8, q_max_ms=20.0) - 3.2) <= 1e-12
    assert queue_update(19.8, 1.0, False, 0.0, q_max_ms=20.0) == 20.0
    assert queue_update(1.0, 0.0, True, 5.0, q_max_ms=20.0) == 0.0


def test_compute_reward_examples():
    emas = np.full(8, 0.8)
    w = np.full(8, 1.0 / 8.0)
    r = compute_reward(emas, Primitive.NOOP, np.zeros(8), w,
                       beta_u=0.02, beta_delta=0.5)
    assert abs(r - 0.8) <= 1e-12
    debts = np.zeros(8)
    debts[3] = 0.4
    r2 = compute_reward(emas, Primitive.NOOP, debts, w,
                        beta_u=0.02, beta_delta=0.5)
    assert abs(r2 - (0.8 - 0.2)) <= 1e-12
    r3 = compute_reward(emas, Primitive.FULL_RETRAIN, np.zeros(8), w,
                        beta_u=0.02, beta_delta=0.5)
    assert abs(r3 - (0.8 - 0.02 * 2.7)) <= 1e-12


def test_compute_costs_example():
    mask = np.array([True, True])
    ric = np.array([1.1, 1.1])
    total = np.array([2.4, 2.4])
    deadlines = np.array([6.0, 6.0])
    costs = compute_costs(mask, ric, total, deadlines)
    assert costs.ric_time_ms == 2.2
    assert costs.violation_ms == 0.0
    late = compute_costs(mask, ric, np.array([7.0, 2.4]), deadlines)
    assert abs(late.violation_ms - 1.0) <= 1e-12


# ---------- environment ----------

def test_reset_state_and_observation_layout():
    cfg = EnvConfig(n_ues=8)
    env = AdaptationEnv(cfg)
    obs = env.reset(seed=42)
    assert obs.shape == (6 * 8 + 1,)
    assert (env.queue_ms == 0).all()
    assert (env.debt == 0).all()
    assert np.array_equal(env.utility_ema, env.quality)
    assert ((env.deadlines_ms >= 6.0) & (env.deadlines_ms <= 12.0)).all()
    block = obs[:6]
    assert block[0] == env.quality[0]
    assert block[1] == env.utility_ema[0]
    assert block[2] == 1.0                      # fresh slack equals the deadline
    assert block[3] == 0.0
    assert block[4] == 0.0
    assert block[5] == env.channel[0]
    assert abs(obs[-1] - env.t_avail_ms / 10.0) <= 1e-12


def test_reset_requires_seed_first_time():
    env = AdaptationEnv(EnvConfig(n_ues=8))
    with pytest.raises(ValueError):
        env.reset()


def test_n_ues_is_validated():
    with pytest.raises(ConfigError):
        AdaptationEnv(EnvConfig(n_ues=7))
    AdaptationEnv(EnvConfig(n_ues=7, allow_any_n=True))
    AdaptationEnv(EnvConfig(n_ues=16))


def test_noise_free_light_adapt_step_matches_hand_computation():
    env = AdaptationEnv(quiet_config())
    env.reset(seed=0)
    obs, reward, costs, done, info = env.step(
        Action(Primitive.LIGHT_ADAPT, np.array([True])))
    # channel pinned at 0.8, queue empty: ric = 1.1, tx = 0.585 * 1.1
    assert abs(costs.ric_time_ms - 1.1) <= 1e-12
    assert costs.violation_ms == 0.0
    assert info.hits[0]
    total = 0.39 + 1.1 + 0.585 * (1.0 + 0.5 * (1.0 - 0.8)) + 0.325
    assert abs(info.total_ms[0] - total) <= 1e-12
    # quality 0.6 gains 0.011 * 0.8 - 0.008, fused feedback equals quality,
    # EWMA blends a fifth of it, and the compute penalty is 0.02 * 0.7
    quality = 0.6 + (0.011 * 0.8 * 1.0 - 0.008)
    ema = 0.8 * 0.6 + 0.2 * quality
    assert abs(env.quality[0] - quality) <= 1e-12
    assert abs(reward - (ema - 0.02 * 0.7)) <= 1e-12
    assert not done


def test_noop_costs_nothing_and_schedules_nobody():
    env = AdaptationEnv(quiet_config(n_ues=4))
    env.reset(seed=1)
    _, reward, costs, _, info = env.step(Action(Primitive.NOOP, np.zeros(4, bool)))
    assert costs.ric_time_ms == 0.0 and costs.violation_ms == 0.0
    assert info.n_scheduled == 0
    assert info.air_overhead_ms == 0.0
    # reward keeps the utility term only: no compute penalty, no debts yet
    assert abs(reward - env.utility_ema.mean()) <= 1e-12


def test_unscheduled_quality_decays_and_is_clipped():
    env = AdaptationEnv(quiet_config(n_ues=2, quality_init_range=(0.01, 0.01),
                                     episode_frames=5))
    env.reset(seed=2)
    env.step(Action(Primitive.NOOP, np.zeros(2, bool)))
    assert abs(env.quality[0] - 0.002) <= 1e-12
    env.step(Action(Primitive.NOOP, np.zeros(2, bool)))
    assert (env.quality >= 0.0).all()


def test_episode_terminates_and_refuses_extra_steps():
    env = AdaptationEnv(quiet_config(episode_frames=3))
    env.reset(seed=3)
    for k in range(3):
        _, _, _, done, _ = env.step(Action(Primitive.NOOP, np.zeros(1, bool)))
    assert done
    with pytest.raises(RuntimeError):
        env.step(Action(Primitive.NOOP, np.zeros(1, bool)))


def test_trajectories_are_bit_reproducible():
    cfg = EnvConfig(n_ues=8)
    actions = []
    rng = np.random.default_rng(5)
    for _ in range(25):
        u = Primitive(int(rng.integers(4)))     # skip NoOp so masks matter
        actions.append(Action(u, rng.random(8) < 0.5))
    traces = []
    for _ in range(2):
        env = AdaptationEnv(cfg)
        obs = env.reset(seed=7)
        trace = [obs.copy()]
        for a in actions:
            obs, r, c, done, _ = env.step(a)
            trace.append(np.concatenate([obs, [r, c.ric_time_ms, c.violation_ms]]))
        traces.append(np.concatenate(trace))
    assert np.array_equal(traces[0], traces[1])


def test_shielded_steps_never_violate_deadlines_or_budget():
    # jitter, fading and congestion all active: the nominal-mode predictor
    # must still upper-bound every realized latency it admitted
    cfg = EnvConfig(n_ues=8)
    shield_cfg = ShieldConfig()
    env = AdaptationEnv(cfg)
    rng = np.random.default_rng(11)
    for ep in range(3):
        env.reset(seed=100 + ep)
        done = False
        while not done:
            ctx = env.feasibility_context(shield_cfg.predictor)
            u = Primitive(int(rng.integers(5)))
            mask = rng.random(8) < 0.7
            if u == Primitive.NOOP:
                mask = np.zeros(8, bool)
            action, _ = project(ctx, Action(u, mask), shield_cfg)
            _, _, costs, done, info = env.step(action)
            assert costs.violation_ms == 0.0
            assert info.hits[action.mask].all() if action.mask.any() else True
            assert costs.ric_time_ms <= ctx.t_avail_ms + 1e-9


def test_oracle_predictor_matches_realized_latency():
    # grant large enough that the whole fleet fits the window, so the
    # per-UE predictions are compared free of contention stretching
    cfg = EnvConfig(n_ues=8, kappa_range=(700, 700))
    env = AdaptationEnv(cfg)
    env.reset(seed=13)
    ctx = env.feasibility_context("oracle")
    action = Action(Primitive.FEAT_REFINE, np.ones(8, bool))
    _, _, _, _, info = env.step(action)
    u = int(Primitive.FEAT_REFINE)
    assert np.abs(ctx.total_ms[u] - info.total_ms).max() <= 1e-12
    assert np.abs(ctx.ric_ms[u] - info.ric_ms).max() <= 1e-12


def test_utilities_stay_in_unit_interval_under_load():
    env = AdaptationEnv(EnvConfig(n_ues=8))
    env.reset(seed=17)
    rng = np.random.default_rng(17)
    for _ in range(200):
        u = Primitive(int(rng.integers(5)))
        mask = rng.random(8) < 0.5 if u != Primitive.NOOP else np.zeros(8, bool)
        _, _, _, done, _ = env.step(Action(u, mask))
        assert (env.quality >= 0).all() and (env.quality <= 1).all()
        assert (env.utility_ema >= 0).all() and (env.utility_ema <= 1).all()
        assert (env.queue_ms >= 0).all() and (env.queue_ms <= 20.0).all()
        if done:
            env.reset(seed=rng.integers(1000))
