"""Closed-loop simulator: a fleet of deployed models sharing one controller.

Each 10 ms control frame the scheduler picks one adaptation primitive and a
UE subset. Model quality decays unless adapted, noisy human feedback fuses
into a smoothed utility, a feedback backlog congests controller compute, and
a fresh radio grant bounds how much compute the frame can spend: demand past
the grant executes serially and straggles into lateness. Costs are the
controller compute consumed and the total deadline overrun.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EnvConfig
from .latency import (
    GrantAllocation,
    Primitive,
    available_window,
    component_table,
    jitter_factor,
    slack_and_debt,
    slot_timing,
)
from .shield import Action, FeasibilityContext, urgency_order

# per-primitive mean quality gain and normalized compute weight
PRIMITIVE_GAIN = np.array([0.028, 0.019, 0.011, 0.014, 0.0])
PRIMITIVE_CHI = np.array([2.7, 1.6, 0.7, 0.9, 0.0])

FRAME_MS = 10.0     # one control frame of wall clock


def semantic_gain(primitive, scheduled, on_time_factor, channel, rng, *,
                  noise_sigma: float = 0.005, decay: float = 0.008) -> float:
    """Quality delta for one UE in one frame.

    Unscheduled models just decay. A scheduled adaptation earns its
    primitive's mean gain (noisy, floored at zero), scaled by channel
    quality and by how much of the deadline it respected.
    """
    if not scheduled:
        return -decay
    base = PRIMITIVE_GAIN[int(primitive)] + noise_sigma * rng.standard_normal()
    return max(float(base), 0.0) * channel * on_time_factor - decay


def feedback_oracle(quality, debt, rng, *, tardiness: float = 0.5,
                    noise_sigma: float = 0.05):
    """Noisy human rating: true quality minus a tardiness penalty, in [0, 1]."""
    quality = np.asarray(quality, dtype=float)
    debt = np.asarray(debt, dtype=float)
    noise = noise_sigma * rng.standard_normal(quality.shape)
    return np.clip(quality - tardiness * np.minimum(debt, 1.0) + noise, 0.0, 1.0)


def fuse_utility(quality, feedback, eta: float):
    """Convex blend of measured quality and human feedback."""
    return (1.0 - eta) * quality + eta * feedback


def ewma_update(previous, value, alpha: float):
    if not 0.0 < alpha <= 1.0:
        raise ValueError("smoothing factor must lie in (0, 1]")
    return (1.0 - alpha) * previous + alpha * value


def queue_update(queue_ms: float, arrival_ms: float, scheduled: bool,
                 ric_ms: float, *, q_max_ms: float = 20.0) -> float:
    """Feedback backlog: arrivals accumulate, scheduled compute drains it."""
    service = ric_ms if scheduled else 0.0
    return float(np.clip(queue_ms + arrival_ms - service, 0.0, q_max_ms))


def compute_reward(utility_ema, primitive, debts, weights, *,
                   beta_u: float = 0.02, beta_delta: float = 0.5) -> float:
    """Priority-weighted utility minus compute and deadline-debt penalties."""
    return float(np.dot(weights, utility_ema)
                 - beta_u * PRIMITIVE_CHI[int(primitive)]
                 - beta_delta * np.sum(debts))


@dataclass(frozen=True)
class CostVector:
    ric_time_ms: float      # controller compute consumed this frame
    violation_ms: float     # summed deadline overrun of scheduled UEs


def compute_costs(mask, ric_ms, total_ms, deadlines_ms) -> CostVector:
    mask = np.asarray(mask, dtype=bool)
    ric = float(np.asarray(ric_ms, dtype=float)[mask].sum())
    over = np.maximum(
        np.asarray(total_ms, dtype=float)[mask]
        - np.asarray(deadlines_ms, dtype=float)[mask], 0.0)
    return CostVector(ric_time_ms=ric, violation_ms=float(over.sum()))


@dataclass(frozen=True)
class StepInfo:
    hits: np.ndarray            # scheduled and met the deadline
    total_ms: np.ndarray        # realized end-to-end latency per UE
    ric_ms: np.ndarray          # realized controller compute per UE
    n_scheduled: int
    air_overhead_ms: float      # dissemination time spent on scheduled UEs
    t_avail_ms: float


class AdaptationEnv:
    """Episodic fleet-adaptation environment with a single decision per frame."""

    def __init__(self, cfg: EnvConfig):
        cfg.validate()
        self.cfg = cfg
        n = cfg.n_ues
        self.weights = (np.full(n, 1.0 / n) if cfg.weights is None
                        else np.asarray(cfg.weights, dtype=float))
        self._rng: np.random.Generator | None = None
        self._done = True
        self._frame = 0

    def reset(self, seed=None) -> np.ndarray:
        """Start a new episode; omitting the seed continues the same stream."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if self._rng is None:
            raise ValueError("first reset needs a seed")
        cfg = self.cfg
        n = cfg.n_ues
        rng = self._rng
        self.deadlines_ms = rng.uniform(*cfg.deadline_range_ms, n)
        self.quality = rng.uniform(*cfg.quality_init_range, n)
        self.utility_ema = self.quality.copy()
        # stationary start so early frames match steady-state channel statistics
        denom = np.sqrt(1.0 - cfg.channel_persistence ** 2)
        spread = cfg.channel_noise_sigma / denom if denom > 0 else 0.0
        self.channel = np.clip(
            cfg.channel_mean + spread * rng.standard_normal(n), 0.0, 1.0)
        self.queue_ms = np.zeros(n)
        self.debt = np.zeros(n)
        self.slack_ms = self.deadlines_ms.copy()
        self._frame = 0
        self._done = False
        self._draw_grant_and_jitter()
        return self._observe()

    def _draw_grant_and_jitter(self):
        cfg = self.cfg
        rng = self._rng
        mu = int(cfg.numerologies[rng.integers(len(cfg.numerologies))])
        n_sym = int(cfg.minislot_symbols[rng.integers(len(cfg.minislot_symbols))])
        kappa = int(rng.integers(cfg.kappa_range[0], cfg.kappa_range[1] + 1))
        t_ctrl = max(
            cfg.t_ctrl_mean_ms + cfg.t_ctrl_sigma_ms * rng.standard_normal(), 0.0)
        self.grant = GrantAllocation(kappa=kappa, n_sym=n_sym, t_ctrl_ms=t_ctrl)
        self.t_avail_ms = available_window(self.grant, slot_timing(mu))
        z = rng.standard_normal(cfg.n_ues)
        self._jitter_g = jitter_factor(z, cfg.jitter_sigma, cfg.jitter_cap_sigmas)

    def _realized_table(self):
        cfg = self.cfg
        return component_table(
            self.queue_ms, self.channel, jitter=self._jitter_g,
            congestion_coeff=cfg.congestion_coeff,
            fading_coeff=cfg.fading_coeff, q_max_ms=cfg.q_max_ms)

    def feasibility_context(self, predictor: str = "nominal") -> FeasibilityContext:
        """Latency predictions for the shield, for the current frame.

        "nominal" applies deterministic congestion and fading plus the full
        jitter headroom, so predictions upper-bound whatever this frame will
        realize. "oracle" uses the frame's already-drawn jitter and predicts
        realized latency exactly.
        """
        cfg = self.cfg
        if predictor == "nominal":
            jitter = 1.0 + cfg.jitter_cap_sigmas * cfg.jitter_sigma
        elif predictor == "oracle":
            jitter = self._jitter_g
        else:
            raise ValueError(f"unknown predictor mode {predictor!r}")
        table = component_table(
            self.queue_ms, self.channel, jitter=jitter,
            congestion_coeff=cfg.congestion_coeff,
            fading_coeff=cfg.fading_coeff, q_max_ms=cfg.q_max_ms)
        return FeasibilityContext(
            t_avail_ms=float(self.t_avail_ms),
            ric_ms=table.ric_ms, total_ms=table.total_ms,
            deadlines_ms=self.deadlines_ms.copy(),
            debt=self.debt.copy(), queue_ms=self.queue_ms.copy())

    def step(self, action: Action):
        if self._done:
            raise RuntimeError("episode finished; call reset")
        cfg = self.cfg
        n = cfg.n_ues
        rng = self._rng
        mask = np.asarray(action.mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError("mask length does not match fleet size")
        u = int(action.primitive)

        table = self._realized_table()
        total = table.total_ms[u]
        ric = table.ric_ms[u]

        # compute runs serially in urgency order and only inside the grant
        # window: jobs whose cumulative demand spills past it cannot finish
        # this frame and complete one frame later (a shielded action never
        # overcommits, so nothing changes there)
        demand = float(ric[mask].sum())
        window = float(self.t_avail_ms)
        if demand > window:
            idx = np.nonzero(mask)[0]
            order = idx[urgency_order(self.debt[idx], self.queue_ms[idx])]
            spilled = np.zeros(n, dtype=bool)
            spilled[order] = np.cumsum(ric[order]) > window
            total = total + spilled * FRAME_MS

        for i in np.nonzero(mask)[0]:
            sd = slack_and_debt(float(total[i]), float(self.deadlines_ms[i]))
            self.slack_ms[i] = sd.slack_ms
            self.debt[i] = sd.debt
        hits = mask & (total <= self.deadlines_ms)

        # backlog: Bernoulli-gated exponential arrivals, drained by compute
        gate = rng.random(n) < cfg.arrival_prob
        sizes = rng.exponential(cfg.arrival_mean_ms, n)
        self.queue_ms = np.clip(
            self.queue_ms + gate * sizes - mask * ric, 0.0, cfg.q_max_ms)

        on_time = np.maximum(1.0 - self.debt, 0.0)
        base = np.maximum(
            PRIMITIVE_GAIN[u] + cfg.gain_noise_sigma * rng.standard_normal(n), 0.0)
        gain = np.where(mask, base * self.channel * on_time - cfg.quality_decay,
                        -cfg.quality_decay)
        self.quality = np.clip(self.quality + gain, 0.0, 1.0)

        feedback = feedback_oracle(
            self.quality, self.debt, rng,
            tardiness=cfg.feedback_tardiness, noise_sigma=cfg.feedback_noise_sigma)
        fused = fuse_utility(self.quality, feedback, cfg.fusion_eta)
        self.utility_ema = ewma_update(self.utility_ema, fused, cfg.ewma_alpha)

        # an empty mask runs no compute, so it carries NoOp's zero weight
        charged = action.primitive if mask.any() else Primitive.NOOP
        reward = compute_reward(
            self.utility_ema, charged, self.debt, self.weights,
            beta_u=cfg.beta_u, beta_delta=cfg.beta_delta)
        costs = compute_costs(mask, ric, total, self.deadlines_ms)
        info = StepInfo(
            hits=hits, total_ms=total.copy(), ric_ms=ric.copy(),
            n_scheduled=int(mask.sum()),
            air_overhead_ms=float(table.tx_ms[u][mask].sum()),
            t_avail_ms=float(self.t_avail_ms))

        self.channel = np.clip(
            cfg.channel_mean
            + cfg.channel_persistence * (self.channel - cfg.channel_mean)
            + cfg.channel_noise_sigma * rng.standard_normal(n), 0.0, 1.0)
        self._draw_grant_and_jitter()
        self._frame += 1
        self._done = self._frame >= cfg.episode_frames
        return self._observe(), reward, costs, self._done, info

    def _observe(self) -> np.ndarray:
        cfg = self.cfg
        per_ue = np.stack([
            self.quality,
            self.utility_ema,
            self.slack_ms / self.deadlines_ms,
            np.minimum(self.debt, 1.0),
            self.queue_ms / cfg.q_max_ms,
            self.channel,
        ], axis=1)
        window = self.t_avail_ms / cfg.t_avail_max_ms
        return np.concatenate([per_ue.reshape(-1), [window]])
