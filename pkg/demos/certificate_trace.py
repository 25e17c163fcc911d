"""
Watching the critic certificate
===============================

Every accepted critic update lowers the certified value by at least nu_bar
and keeps it inside the kappa sandwich. With nu_bar raised to 0.1 the budget
of updates is small: each episode spends it in its first few steps and the
nominal controller drives the rest of the way. Where those few learned steps
leave the robot decides whether the nominal route crosses the slow zone,
which is why some episodes cost far more than others.
"""

import math

from calfnav import CalfAgent, CriticSpec, NominalGains, NominalPolicy, preset_a, run_episode
from calfnav.agents import t_hat_bound
from calfnav.critic import kappa_bounds

scen = preset_a()
spec = CriticSpec("state-linear", nu_bar=0.1, c_low=0.1, c_up=1e3, replay_len=8, reg=1e-3)
agent = CalfAgent(spec, scen, baseline=NominalPolicy(NominalGains(0.2, 1.5, -0.15)), anchor="lower")

for ep in range(5):
    log = run_episode(agent, scen)
    cs = agent.state
    bound = math.ceil(t_hat_bound(cs.q_initial, spec.nu_bar))
    learned = cs.mode_log.count("learned")
    print(f"episode {ep + 1}: cost {log.total_cost:8.2f}, reached at {log.reach_time:4.1f} s, q0 {cs.q_initial:7.3f}, "
          f"{cs.successful_updates} updates (bound {bound}), {learned}/{len(cs.mode_log)} learned steps")

# %% the accepted values of the last episode, each with its sandwich
cs = agent.state
for s, q in list(zip(cs.success_states, cs.success_q))[:8]:
    lo, up = kappa_bounds(s, spec)
    print(f"  {lo:8.4f} <= {q:8.4f} <= {up:10.2f}")
