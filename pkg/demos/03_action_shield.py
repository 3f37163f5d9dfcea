"""
The action shield: projecting proposals into the feasible set
=============================================================

A proposed action is a (primitive, terminal subset) pair. It is
feasible when every selected terminal's predicted end-to-end latency
meets its deadline and the summed controller compute fits the grant
window. The shield repairs infeasible proposals: drop doomed
terminals, admit the rest most-urgent-first under the budget, and
only then fall back to a cheaper primitive. This script steps through
each stage on a hand-built context.
"""
import numpy as np

from semsched.config import ShieldConfig
from semsched.latency import Primitive, component_table
from semsched.shield import (
    Action,
    FeasibilityContext,
    fallback_ladder,
    is_feasible,
    project,
    urgency_order,
)

# ---- a tight afternoon: three terminals, small grant ----
queue_ms = np.array([2.0, 12.0, 0.0])
table = component_table(queue_ms, channel_quality=np.array([0.9, 0.5, 0.8]))
ctx = FeasibilityContext(
    t_avail_ms=6.0,
    ric_ms=table.ric_ms,
    total_ms=table.total_ms,
    deadlines_ms=np.array([9.0, 8.0, 6.5]),
    debt=np.array([0.0, 0.4, 0.1]),
    queue_ms=queue_ms,
)

print("predicted FULL_RETRAIN latency per UE:",
      np.round(ctx.total_ms[int(Primitive.FULL_RETRAIN)], 2))
print("deadlines:", ctx.deadlines_ms)
print("urgency order (debt desc, queue desc):",
      urgency_order(ctx.debt, ctx.queue_ms))

# ---- the greedy ask: full retraining for everyone ----
cfg = ShieldConfig()
proposal = Action(Primitive.FULL_RETRAIN, np.ones(3, dtype=bool))
print("\nproposal:", proposal.primitive.name, proposal.mask)
print("feasible as-is?", is_feasible(ctx, proposal))

final, report = project(ctx, proposal, cfg)
print("projected:", final.primitive.name, final.mask)
print("deadline drops:", report.deadline_drops,
      " budget drops:", report.budget_drops,
      " fallbacks:", [p.name for p in report.fallbacks])
print("feasible now?", is_feasible(ctx, final))

# projecting the repaired action changes nothing: the projection is
# idempotent, so stacking shields is harmless
again, rep2 = project(ctx, final, cfg)
assert again.primitive == final.primitive
assert np.array_equal(again.mask, final.mask)
print("second projection is a no-op:", not rep2.changed)

# ---- the fallback ladder is configurable ----
# The default ladder retreats FULL_RETRAIN -> FEAT_REFINE ->
# DEPLOY_CACHED -> LIGHT_ADAPT -> NOOP. A reversed mid-section backs
# heavy proposals off to cached deployment sooner, trading adaptation
# depth for cheaper decisions. In a 3.2 ms window one feature
# refinement (2.8 ms compute) still fits, so the ladders diverge:
print("\ndefault ladder :", [p.name for p in fallback_ladder(cfg)])
reversed_cfg = ShieldConfig(fallback_order=(
    "light_adapt", "feat_refine", "full_retrain", "deploy_cached", "noop"))
print("reversed ladder:", [p.name for p in fallback_ladder(reversed_cfg)])

tight = FeasibilityContext(
    t_avail_ms=3.2, ric_ms=table.ric_ms, total_ms=table.total_ms,
    deadlines_ms=ctx.deadlines_ms, debt=ctx.debt, queue_ms=queue_ms)
for name, c in (("default", cfg), ("reversed", reversed_cfg)):
    got, _ = project(tight, Action(Primitive.FULL_RETRAIN,
                                   np.ones(3, dtype=bool)), c)
    print(f"{name}: FULL_RETRAIN in a 3.2 ms window ->",
          got.primitive.name, got.mask)
