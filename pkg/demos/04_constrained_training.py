"""
Constrained policy optimization with adaptive multipliers
=========================================================

The scheduler is trained as a constrained MDP: maximize semantic
utility subject to two per-frame budgets, controller compute and
deadline-overrun time. After every rollout each Lagrange multiplier
takes a projected subgradient step (up when its cost exceeds budget,
down toward zero otherwise) with EMA smoothing, and the policy prices
its cost advantages with the result.

Two shortened runs (24 updates instead of 120) make the dynamics
visible in under a minute. With the shield on, the projection keeps
both costs inside budget, so the multipliers never leave the zero
floor. With the shield off, the exploring policy immediately blows
the compute budget: the multipliers climb while the violation lasts
and decay once the policy has over-corrected into inaction.
"""
import numpy as np

from semsched.config import AblationFlags, EnvConfig, ShieldConfig, TrainConfig
from semsched.cppo import evaluate, policy_actor, train

env_cfg = EnvConfig(n_ues=8)
train_cfg = TrainConfig(updates=24)
shield_cfg = ShieldConfig()


def show(label: str, rows) -> None:
    print(f"\n--- {label} ---")
    print("update  reward   ric_ms  hit_rate  lambda1   lambda2")
    for row in rows[::4]:
        print(f"{row['index']:>6}{row['mean_reward']:>9.4f}"
              f"{row['ric_ms']:>9.3f}{row['hit_rate']:>9.2f}"
              f"{row['lambda1']:>11.6f}{row['lambda2']:>10.6f}")


print("training the shielded constrained agent...")
shielded = train(env_cfg, train_cfg, shield_cfg, seed=42, agent="tcppo")
show("shield on: costs stay under budget, multipliers stay at zero",
     shielded.rows)
print(f"compute budget {shielded.duals.budget1:.3f} ms/frame,"
      f" overrun budget {shielded.duals.budget2:.3f} ms/frame")

print("\ntraining the same agent without the shield...")
raw = train(env_cfg, train_cfg, shield_cfg, seed=42, agent="tcppo",
            ablation=AblationFlags(no_shield=True))
show("shield off: early over-scheduling binds both constraints",
     raw.rows)
print(f"final multipliers: lambda1={raw.duals.lam1:.6f}"
      f" lambda2={raw.duals.lam2:.6f}")

# deployment mode for the shielded policy: greedy actor, fresh episodes
rows = evaluate(policy_actor(shielded.policy), env_cfg, shield_cfg,
                episodes=5, seed=42)
rewards = [r["mean_reward"] for r in rows]
hits = [r["hit_rate"] for r in rows]
print(f"\nshielded eval over {len(rows)} episodes:"
      f" reward {np.mean(rewards):.4f} +- {np.std(rewards):.4f},"
      f" deadline hit rate {min(hits):.1f}")
