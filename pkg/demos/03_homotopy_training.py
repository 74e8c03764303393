"""
Train the centralized homotopy learner on the desk-scale preset and watch
the penalty weight anneal while the moving-average reward climbs; compare
the end state against the plain (no-penalty) variant and the random
baseline.

Run:  python demos/03_homotopy_training.py        (a few minutes)
      python demos/03_homotopy_training.py quick  (short demo run)
"""

import sys
from dataclasses import replace

import numpy as np

from coopcache import experiment as xp

quick = len(sys.argv) > 1 and sys.argv[1] == "quick"
epochs = 3000 if quick else 20_000

cfg = replace(xp.PRESETS["tiny"], seed=2, total_epochs=epochs,
              eval_epochs=1000, out_dir="runs/demo-hddpg")
print(f"training centralized homotopy learner, {epochs} epochs ...")
result = xp.run_experiment(cfg, progress=max(epochs // 10, 1))

rewards = np.array([r["reward"] for r in result["train_records"]])
lams = [r["lam"] for r in result["train_records"]]
window = min(2000, epochs // 4)
print("\nepoch    lambda     avg reward (trailing)")
for t in range(window, epochs + 1, max((epochs - window) // 8, 1)):
    print(f"{t:>6}  {lams[t - 1]:+.4f}   {rewards[max(0, t - window):t].mean():.4f}")

eval_rewards = [r["reward"] for r in result["eval_records"]]
print(f"\ngreedy evaluation over {len(eval_rewards)} further epochs: "
      f"mean reward {np.mean(eval_rewards):.4f} "
      f"(+/- {np.std(eval_rewards):.4f})")

rcu = replace(cfg, mode="rcu", total_epochs=1, eval_epochs=1000,
              out_dir="runs/demo-rcu")
rcu_rewards = [r["reward"] for r in xp.run_experiment(rcu)["eval_records"]]
print(f"random cache updating on a matched network:     "
      f"mean reward {np.mean(rcu_rewards):.4f}")

print("\nfiles written:")
print(" ", result["metrics_path"])
print(" ", result["checkpoint_path"])
print("learning curve:")
xp.export_learning_curve(result["metrics_path"], window,
                         "runs/demo-hddpg/curve.csv")
print("  runs/demo-hddpg/curve.csv")
