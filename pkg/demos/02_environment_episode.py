"""
One episode of the adaptation environment
=========================================

A controller serves a small fleet of terminals, each running a
personalized semantic decoder with its own latency deadline. Every
10 ms frame it picks one adaptation primitive and a subset of
terminals to apply it to; quality decays on its own, compute spends
the radio grant, and missed deadlines leave lingering debt.

Here a deliberately naive policy (always light adaptation, everyone)
is run twice: once through the safety shield and once raw, to show
why over-committing the grant window hurts.
"""
import numpy as np

from semsched.config import EnvConfig, ShieldConfig
from semsched.env import AdaptationEnv
from semsched.latency import Primitive
from semsched.shield import Action, project


def run(shielded: bool, frames: int = 40) -> None:
    cfg = EnvConfig(n_ues=8, episode_frames=frames)
    env = AdaptationEnv(cfg)
    shield_cfg = ShieldConfig()
    env.reset(seed=7)

    label = "shielded" if shielded else "unshielded"
    print(f"\n--- {label} run, greedy light adaptation on the whole fleet ---")
    print("frame  window  asked  kept  hit_rate  reward")
    total_reward = 0.0
    for frame in range(frames):
        proposal = Action(Primitive.LIGHT_ADAPT, np.ones(cfg.n_ues, dtype=bool))
        if shielded:
            ctx = env.feasibility_context(shield_cfg.predictor)
            action, _ = project(ctx, proposal, shield_cfg)
        else:
            action = proposal
        obs, reward, costs, done, info = env.step(action)
        total_reward += reward
        if frame % 8 == 0:
            if info.n_scheduled:
                hit = f"{info.hits.sum() / info.n_scheduled:>10.2f}"
            else:
                hit = f"{'-':>10}"
            print(f"{frame:>5}{info.t_avail_ms:>8.2f}{cfg.n_ues:>7}"
                  f"{info.n_scheduled:>6}{hit}{reward:>8.3f}")
    print(f"mean reward/frame: {total_reward / frames:.4f}")


# The shield trims the fleet to whatever the grant window can actually
# finish, so everything scheduled lands on time. The raw policy pushes
# all eight adaptations into a window that fits two or three: the
# overflow completes a frame late, misses every deadline, and the debt
# drags the reward down.
run(shielded=True)
run(shielded=False)
