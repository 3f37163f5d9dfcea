"""Control-plane timing arithmetic and adaptation-latency decomposition.

Latency of one adaptation round splits into feedback collection, controller
compute (the scarce resource the scheduler budgets), model dissemination,
and reconfiguration. Profiled means per primitive are perturbed by queue
congestion (controller compute only), channel fading (dissemination only),
and a bounded multiplicative execution jitter on every component.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Primitive(IntEnum):
    """Adaptation primitives, ordered by profiled compute weight."""

    FULL_RETRAIN = 0
    FEAT_REFINE = 1
    LIGHT_ADAPT = 2
    DEPLOY_CACHED = 3
    NOOP = 4


PRIMITIVE_NAMES = {
    "full_retrain": Primitive.FULL_RETRAIN,
    "feat_refine": Primitive.FEAT_REFINE,
    "light_adapt": Primitive.LIGHT_ADAPT,
    "deploy_cached": Primitive.DEPLOY_CACHED,
    "noop": Primitive.NOOP,
}

# profiled means (ms): controller compute and end-to-end total per primitive
_RIC_MS = np.array([5.0, 2.8, 1.1, 1.5, 0.0])
_E2E_MS = np.array([8.4, 5.0, 2.4, 3.1, 0.1])
# the non-compute residual splits across feedback, dissemination, reconfig
_RESIDUAL_MS = _E2E_MS - _RIC_MS
_FB_MS = 0.30 * _RESIDUAL_MS
_TX_MS = 0.45 * _RESIDUAL_MS
_RECONF_MS = 0.25 * _RESIDUAL_MS


@dataclass(frozen=True)
class SlotTiming:
    mu: int
    t_slot_ms: float
    t_sym_ms: float


def slot_timing(mu: int) -> SlotTiming:
    """Slot and symbol durations for numerology mu (15 * 2^mu kHz spacing)."""
    if mu not in (0, 1, 2):
        raise ValueError(f"unsupported numerology {mu}")
    t_slot = 1.0 / (2 ** mu)
    return SlotTiming(mu=int(mu), t_slot_ms=t_slot, t_sym_ms=t_slot / 14.0)


@dataclass(frozen=True)
class GrantAllocation:
    """One control frame's compute grant: kappa mini-slots of n_sym symbols."""

    kappa: int
    n_sym: int
    t_ctrl_ms: float


def available_window(grant: GrantAllocation, timing: SlotTiming) -> float:
    """Controller compute budget left after signalling overhead, clamped at 0."""
    raw = grant.kappa * grant.n_sym * timing.t_sym_ms - grant.t_ctrl_ms
    return max(raw, 0.0)


@dataclass(frozen=True)
class LatencyComponents:
    fb_ms: float
    ric_ms: float
    tx_ms: float
    reconf_ms: float
    total_ms: float


@dataclass(frozen=True)
class ComponentTable:
    """Latency decomposition for every (primitive, UE) pair; arrays (5, n)."""

    fb_ms: np.ndarray
    ric_ms: np.ndarray
    tx_ms: np.ndarray
    reconf_ms: np.ndarray
    total_ms: np.ndarray


def jitter_factor(z, sigma: float, cap_sigmas: float = 3.0):
    """Multiplicative execution jitter, truncated to [0, 1 + cap_sigmas * sigma].

    The upper truncation is what lets a deterministic predictor with matching
    headroom upper-bound every realized latency.
    """
    return np.clip(1.0 + sigma * z, 0.0, 1.0 + cap_sigmas * sigma)


def component_table(queue_ms, channel_quality, *, jitter=1.0,
                    congestion_coeff: float = 0.5, fading_coeff: float = 0.5,
                    q_max_ms: float = 20.0) -> ComponentTable:
    """Per-UE latency decomposition under congestion, fading and jitter.

    `jitter` is a realized (or bounding) multiplicative factor, scalar or
    per-UE array, applied to every component. Congestion scales controller
    compute with the feedback backlog; fading scales dissemination with
    channel quality. The no-op row disseminates nothing, so fading leaves it
    untouched, and its zero compute base makes congestion moot.
    """
    queue_ms = np.asarray(queue_ms, dtype=float)
    channel_quality = np.asarray(channel_quality, dtype=float)
    g = np.broadcast_to(np.asarray(jitter, dtype=float), queue_ms.shape)
    congestion = 1.0 + congestion_coeff * np.minimum(queue_ms / q_max_ms, 1.0)
    fading = 1.0 + fading_coeff * (1.0 - channel_quality)
    fb = _FB_MS[:, None] * g[None, :]
    ric = _RIC_MS[:, None] * congestion[None, :] * g[None, :]
    tx = _TX_MS[:, None] * fading[None, :] * g[None, :]
    tx[int(Primitive.NOOP)] = _TX_MS[int(Primitive.NOOP)] * g
    reconf = _RECONF_MS[:, None] * g[None, :]
    total = fb + ric + tx + reconf
    return ComponentTable(fb_ms=fb, ric_ms=ric, tx_ms=tx, reconf_ms=reconf,
                          total_ms=total)


def nominal_latency(primitive: Primitive) -> LatencyComponents:
    """Profiled-mean decomposition with no perturbations."""
    u = int(primitive)
    fb, ric, tx, reconf = _FB_MS[u], _RIC_MS[u], _TX_MS[u], _RECONF_MS[u]
    return LatencyComponents(
        fb_ms=float(fb), ric_ms=float(ric), tx_ms=float(tx),
        reconf_ms=float(reconf), total_ms=float(fb + ric + tx + reconf))


def perturbed_latency(primitive: Primitive, *, queue_ms: float,
                      channel_quality: float, rng: np.random.Generator,
                      congestion_coeff: float = 0.5, jitter_sigma: float = 0.05,
                      fading_coeff: float = 0.5, jitter_cap_sigmas: float = 3.0,
                      q_max_ms: float = 20.0) -> LatencyComponents:
    """Single-UE realized latency; draws one jitter variate from rng."""
    z = rng.standard_normal()
    g = float(jitter_factor(z, jitter_sigma, jitter_cap_sigmas))
    table = component_table(
        np.array([queue_ms], dtype=float),
        np.array([channel_quality], dtype=float),
        jitter=g, congestion_coeff=congestion_coeff,
        fading_coeff=fading_coeff, q_max_ms=q_max_ms)
    u = int(primitive)
    return LatencyComponents(
        fb_ms=float(table.fb_ms[u, 0]), ric_ms=float(table.ric_ms[u, 0]),
        tx_ms=float(table.tx_ms[u, 0]), reconf_ms=float(table.reconf_ms[u, 0]),
        total_ms=float(table.total_ms[u, 0]))


@dataclass(frozen=True)
class SlackDebt:
    slack_ms: float
    debt: float


def slack_and_debt(total_ms: float, deadline_ms: float) -> SlackDebt:
    """Remaining margin and relative overrun of one adaptation round."""
    if deadline_ms <= 0.0:
        raise ValueError("deadline must be positive")
    return SlackDebt(slack_ms=deadline_ms - total_ms,
                     debt=max(total_ms / deadline_ms - 1.0, 0.0))
