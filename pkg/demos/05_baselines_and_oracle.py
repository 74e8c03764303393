"""
The non-learning policies and the exhaustive oracle on a toy instance.

Run:  python demos/05_baselines_and_oracle.py
"""

import numpy as np

from coopcache import (NetworkConfig, RequestStats, SmallCellEnv, TinyMdp,
                       brute_force_oracle, co_cu_decide,
                       estimate_local_popularity, lo_cu_decide, rcu_decide)
from coopcache.baselines import _miss_update_objective
from coopcache.controllers import BaselineController

# --- per-station demand estimates -> decisions -------------------------
cfg = NetworkConfig(num_sbs=2, comm_radius_m=500.0, max_users_per_sbs=10,
                    ppp_density=2e-5, num_content=5, cache_capacity=2.0)
env = SmallCellEnv(cfg, seed=11, shuffle_period=None, skew_choices=(1.5,))
stats = RequestStats.from_users(env.state.users, cfg.num_content)
print("observed request counts (item x station):\n", stats.counts)
print("estimated local popularity:\n",
      np.round(estimate_local_popularity(stats.counts), 3))

joint = co_cu_decide(stats, env.state.cache, cfg.cache_capacity)
print("\njointly optimized decision:\n", np.round(joint, 3))
print("one-epoch objective:",
      round(_miss_update_objective(joint, stats, env.state.cache), 3))

local = np.column_stack([
    lo_cu_decide(stats.counts[:, b], env.state.cache[:, b],
                 cfg.cache_capacity)
    for b in range(cfg.num_sbs)])
print("\nper-station greedy decision:\n", local)

random_alloc = rcu_decide(cfg.num_content, cfg.num_sbs, cfg.cache_capacity,
                          np.random.default_rng(0))
print("\nrandom full-budget allocation (column sums "
      f"{random_alloc.sum(axis=0)}):\n", np.round(random_alloc, 3))

# --- exhaustive oracle on a quantized two-epoch problem ------------------
mdp = TinyMdp(
    num_sbs=2, num_content=2, capacity=1.0, horizon=2, grid_step=0.25,
    initial_cache=((1.0, 0.0), (0.0, 1.0)),
    request_schedule=(
        ((0, (True, False)), (1, (False, True))),
        ((0, (True, True)), (1, (True, False))),
    ))
value, optimizers = brute_force_oracle(mdp)
print(f"\noracle: optimal 2-epoch return {value:.3f}, "
      f"{len(optimizers)} optimal sequences")
fully_loaded = sum(all(abs(sum(st) - 1.0) < 1e-12
                       for joint in seq for st in joint)
                   for seq in optimizers)
print(f"of these, {fully_loaded} keep every station at full storage "
      "(the structure the training penalty rewards)")

# --- a thousand matched epochs: optimization vs random -------------------
print("\nmean fronthaul traffic over 1000 matched epochs:")
big = NetworkConfig(num_sbs=4, comm_radius_m=500.0, max_users_per_sbs=25,
                    ppp_density=3e-5, num_content=5, cache_capacity=2.0)
for name in ("cocu", "locu", "rcu"):
    env = SmallCellEnv(big, seed=1234, shuffle_period=None,
                       skew_choices=(1.0,))
    ctl = BaselineController(name, big, seed=5)
    traffic = -np.mean([ctl.eval_epoch(env, index=i)["reward"]
                        for i in range(1000)])
    print(f"  {name:>5}: {traffic:.4f}")
