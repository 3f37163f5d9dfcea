"""Action shield: projects proposed adaptations into the feasible set.

An action is feasible when the predicted controller compute of all scheduled
UEs fits the frame's window and every scheduled UE's predicted end-to-end
latency meets its deadline. Infeasible proposals are repaired in two moves:
UEs that cannot meet their deadline (or do not fit the budget) are pruned in
reverse urgency order, and if no subset survives, the primitive is demoted
along a fallback ladder that terminates at no-op.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .latency import PRIMITIVE_NAMES, Primitive


@dataclass
class Action:
    """One scheduling decision: a primitive and the UE subset receiving it."""

    primitive: Primitive
    mask: np.ndarray

    def __post_init__(self):
        self.primitive = Primitive(self.primitive)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.primitive == Primitive.NOOP and self.mask.any():
            raise ValueError("no-op cannot schedule any UE")


@dataclass
class FeasibilityContext:
    """Everything the shield needs about the current frame."""

    t_avail_ms: float
    ric_ms: np.ndarray        # (5, n) predicted controller compute
    total_ms: np.ndarray      # (5, n) predicted end-to-end latency
    deadlines_ms: np.ndarray  # (n,)
    debt: np.ndarray          # (n,) deadline debt, primary urgency key
    queue_ms: np.ndarray      # (n,) feedback backlog, tie-breaker


@dataclass(frozen=True)
class ProjectionReport:
    changed: bool
    fallbacks: tuple[Primitive, ...] = ()
    budget_drops: tuple[int, ...] = ()
    deadline_drops: tuple[int, ...] = ()


def urgency_order(debt, queue_ms) -> np.ndarray:
    """UE indices from most to least urgent: debt desc, queue desc, index asc."""
    debt = np.asarray(debt, dtype=float)
    queue_ms = np.asarray(queue_ms, dtype=float)
    return np.lexsort((np.arange(debt.size), -queue_ms, -debt))


def fallback_ladder(cfg) -> tuple[Primitive, ...]:
    """Resolve the configured fallback order into primitives."""
    unknown = [name for name in cfg.fallback_order if name not in PRIMITIVE_NAMES]
    if unknown:
        raise ValueError(f"unknown primitive names in fallback order: {unknown}")
    rungs = tuple(PRIMITIVE_NAMES[name] for name in cfg.fallback_order)
    if len(rungs) != 5 or set(rungs) != set(Primitive) or rungs[-1] != Primitive.NOOP:
        raise ValueError("fallback order must visit every primitive once and "
                         "end at no-op")
    return rungs


def is_feasible(ctx: FeasibilityContext, action: Action) -> bool:
    mask = np.asarray(action.mask, dtype=bool)
    if not mask.any():
        return True
    u = int(action.primitive)
    if float(ctx.ric_ms[u][mask].sum()) > ctx.t_avail_ms:
        return False
    return bool((ctx.total_ms[u][mask] <= ctx.deadlines_ms[mask]).all())


def project(ctx: FeasibilityContext, proposed: Action,
            cfg) -> tuple[Action, ProjectionReport]:
    """Repair a proposal into the feasible set, changing as little as possible.

    At each ladder rung starting from the proposal's own primitive, UEs whose
    end-to-end latency would blow their deadline are removed, then the rest
    are admitted most-urgent-first while the compute budget still holds. The
    first rung that keeps a nonempty subset wins; feasible proposals pass
    through untouched, so the projection is idempotent.
    """
    ladder = fallback_ladder(cfg)
    if not proposed.mask.any():
        return proposed, ProjectionReport(changed=False)
    n = proposed.mask.size
    order = urgency_order(ctx.debt, ctx.queue_ms)
    fallbacks: list[Primitive] = []
    for rung in ladder[ladder.index(proposed.primitive):]:
        if rung != proposed.primitive:
            fallbacks.append(rung)
        if rung == Primitive.NOOP:
            return (Action(Primitive.NOOP, np.zeros(n, dtype=bool)),
                    ProjectionReport(changed=True, fallbacks=tuple(fallbacks)))
        u = int(rung)
        meets_deadline = proposed.mask & (ctx.total_ms[u] <= ctx.deadlines_ms)
        if not meets_deadline.any():
            continue
        admitted = np.zeros(n, dtype=bool)
        budget_drops: list[int] = []
        for i in order:
            if not meets_deadline[i]:
                continue
            trial = admitted.copy()
            trial[i] = True
            if float(ctx.ric_ms[u][trial].sum()) <= ctx.t_avail_ms:
                admitted = trial
            else:
                budget_drops.append(int(i))
        if not admitted.any():
            continue
        final = Action(rung, admitted)
        changed = (rung != proposed.primitive
                   or not np.array_equal(admitted, proposed.mask))
        deadline_drops = tuple(
            int(i) for i in np.nonzero(proposed.mask & ~meets_deadline)[0])
        return final, ProjectionReport(
            changed=changed, fallbacks=tuple(fallbacks),
            budget_drops=tuple(budget_drops), deadline_drops=deadline_drops)
    raise AssertionError("fallback ladder ends at no-op; unreachable")
