"""
Slot timing, grant windows, and the latency decomposition
=========================================================

Every control decision in this package lives inside a 10 ms frame whose
compute budget comes from a radio grant, and every adaptation primitive
carries a four-part latency: feedback collection, controller compute,
transmission, and reconfiguration. This script walks the arithmetic.
"""
import numpy as np

from semsched.latency import (
    GrantAllocation,
    Primitive,
    available_window,
    component_table,
    nominal_latency,
    perturbed_latency,
    slack_and_debt,
    slot_timing,
)

# ---- 1. numerology sets the symbol clock ----
# Subcarrier spacing 15 * 2^mu kHz halves the slot each step up.
for mu in (0, 1, 2):
    t = slot_timing(mu)
    print(f"mu={mu}: slot {t.t_slot_ms:.4f} ms, symbol {t.t_sym_ms:.4f} ms")

# ---- 2. a grant becomes a compute window ----
# kappa mini-slots of n_sym symbols each, minus fixed control signalling.
timing = slot_timing(1)
grant = GrantAllocation(kappa=30, n_sym=4, t_ctrl_ms=0.1)
window = available_window(grant, timing)
print(f"\ngrant kappa={grant.kappa} n_sym={grant.n_sym}"
      f" -> window {window:.3f} ms")

# a starved grant clamps at zero rather than going negative
starved = GrantAllocation(kappa=1, n_sym=1, t_ctrl_ms=1.0)
print(f"starved grant -> window {available_window(starved, timing):.3f} ms")

# ---- 3. nominal latency per primitive ----
print("\nprimitive        fb     ric    tx     reconf  total (ms)")
for primitive in Primitive:
    c = nominal_latency(primitive)
    print(f"{primitive.name:<15}{c.fb_ms:>6.3f}{c.ric_ms:>8.3f}"
          f"{c.tx_ms:>7.3f}{c.reconf_ms:>8.3f}{c.total_ms:>8.3f}")

# ---- 4. congestion and fading stretch the nominals ----
# Queue backlog inflates feedback collection, poor channel quality
# inflates transmission, and one lognormal-ish jitter factor scales
# the whole row. With every coefficient zeroed the nominals come back.
rng = np.random.default_rng(0)
busy = perturbed_latency(Primitive.FULL_RETRAIN, queue_ms=15.0,
                         channel_quality=0.3, rng=rng)
quiet = perturbed_latency(Primitive.FULL_RETRAIN, queue_ms=15.0,
                          channel_quality=0.3, rng=rng,
                          congestion_coeff=0.0, jitter_sigma=0.0,
                          fading_coeff=0.0)
print(f"\nFULL_RETRAIN under load : {busy.total_ms:.3f} ms")
print(f"FULL_RETRAIN, all coeffs zeroed: {quiet.total_ms:.3f} ms"
      f" (nominal {nominal_latency(Primitive.FULL_RETRAIN).total_ms:.3f})")

# the vectorised table gives the same decomposition for a whole fleet
table = component_table(queue_ms=np.array([0.0, 10.0, 20.0]),
                        channel_quality=np.array([1.0, 0.6, 0.2]))
print("\nLIGHT_ADAPT totals across three UEs (idle -> congested):",
      np.round(table.total_ms[int(Primitive.LIGHT_ADAPT)], 3))

# ---- 5. slack and debt score a realized latency against its deadline ----
on_time = slack_and_debt(total_ms=4.0, deadline_ms=6.0)
late = slack_and_debt(total_ms=7.5, deadline_ms=6.0)
print(f"\n4.0 ms vs 6.0 ms deadline: slack {on_time.slack_ms:+.2f} ms,"
      f" debt {on_time.debt:.3f}")
print(f"7.5 ms vs 6.0 ms deadline: slack {late.slack_ms:+.2f} ms,"
      f" debt {late.debt:.3f} (fraction of the deadline overshot)")
