"""
CALF against its SARSA-m ablation
=================================

Both agents share the critic and the greedy actor. When a critic update is
infeasible CALF hands the step to the nominal controller, SARSA-m does not.
This prints the top-quartile median cost and the success rate every few
episodes, plus the bootstrap band.

    python demos/learning_curve.py --seeds 1-5 --episodes 20
"""

import argparse

from calfnav.harness import load_config, parse_seeds, run_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--seeds", default="1-5")
parser.add_argument("--episodes", type=int, default=20)
parser.add_argument("--every", type=int, default=5, help="print every n-th episode")
args = parser.parse_args()

runs = {}
for name in ("calf", "sarsa-m"):
    cfg = load_config(f"preset-a-{name}").with_overrides(seeds=parse_seeds(args.seeds), episodes=args.episodes)
    runs[name] = run_experiment(cfg)

print(f"{'episode':>7}  {'CALF median [95% CI]':>32}  {'ok':>5}  {'SARSA-m median [95% CI]':>32}  {'ok':>5}")
for calf, sarsa in zip(runs["calf"].summary, runs["sarsa-m"].summary):
    if calf.episode % args.every and calf.episode != args.episodes - 1:
        continue
    cells = [f"{r.median_top25_cost:10.2f} [{r.ci_low:8.2f}, {r.ci_high:8.2f}]  {r.success_rate:5.2f}"
             for r in (calf, sarsa)]
    print(f"{calf.episode + 1:>7}  " + "  ".join(cells))

# %% SARSA-m never falls back, so a bad critic can stall it short of the goal
for name, run in runs.items():
    print(f"{name}: overall success rate {run.success_rate:.3f}")
