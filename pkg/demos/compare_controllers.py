"""
Nominal controller, CALF and MPC on preset A
============================================

One episode each from the preset-A start pose. The hot spot sits close to
the straight line home, so the three controllers trade path length against
exposure differently.
"""

import numpy as np

from calfnav import MpcConfig, MpcPolicy, NominalGains, NominalPolicy, run_episode
from calfnav.harness import load_config, make_policy

cfg = load_config("preset-a-calf")
scen = cfg.build_scenario()
spot = np.array([scen.hot_spot.mu_x, scen.hot_spot.mu_y])


def describe(name, log):
    xy = log.states()[:, :2]
    closest = np.min(np.linalg.norm(xy - spot, axis=1))
    reach = f"{log.reach_time:5.1f} s" if log.reached_goal else "  never"
    print(f"{name:<22} cost {log.total_cost:9.2f}   reach {reach}   closest to spot {closest:.3f} m")


# %% the stabilizer alone drives nearly straight through the spot's skirt
describe("nominal", run_episode(NominalPolicy(NominalGains(0.2, 1.5, -0.15)), scen))

# %% CALF starts from the nominal's behaviour and improves over episodes
agent = make_policy(cfg, seed=1)
for ep in range(cfg.episodes):
    log = run_episode(agent, scen)
    if ep in (0, 9, cfg.episodes - 1):
        describe(f"CALF, episode {ep + 1}", log)
print(f"  successful critic updates in the last episode: {agent.state.successful_updates}")
print(f"  baseline takeovers in the last episode: {agent.state.recovery_invocations}")

# %% a 10-step MPC plans around the spot explicitly (about ten seconds)
describe("MPC, N=10", run_episode(MpcPolicy(MpcConfig(horizon=10, substeps=4), scen), scen))
