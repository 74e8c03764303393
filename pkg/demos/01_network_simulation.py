"""
Walk through the network simulator: station placement, user arrivals,
cache-transition costs, and the traffic-based reward.

Run:  python demos/01_network_simulation.py
"""

import numpy as np

from coopcache import (NetworkConfig, PopularityModel, SmallCellEnv,
                       compute_reward, compute_traffic_cost)
from coopcache.env import encode_global_state, place_sbs, sample_users

cfg = NetworkConfig()  # four stations on a 1 km x 1 km area, 20 items, L = 4
print("station grid:\n", place_sbs(cfg))

env = SmallCellEnv(cfg, seed=7)
users = env.state.users
print(f"\nepoch 0: {users.num_users} users arrived "
      f"(PPP intensity {cfg.ppp_density * cfg.area_side_m ** 2:.0f})")
print("users served per station:", users.per_sbs_counts())
print("request histogram:", np.bincount(users.requests, minlength=20))

# an empty cache pays one full item per request over the fronthaul
action = np.zeros((cfg.num_content, cfg.num_sbs))
outcome = env.step(action)
print(f"\nall-miss epoch: traffic {outcome.traffic_cost:.1f} bits, "
      f"reward {outcome.reward:.3f}")

# caching the five most-requested items fully at every station
counts = np.bincount(env.state.users.requests, minlength=20)
top = np.argsort(counts)[::-1][:4]
action = np.zeros((cfg.num_content, cfg.num_sbs))
action[top, :] = 1.0
outcome = env.step(action)
print(f"top-4 cached: update {outcome.update_cost:.1f}, "
      f"miss {outcome.miss_cost:.1f}, reward {outcome.reward:.3f}")

# keeping the same allocation stops paying update cost
outcome = env.step(action)
print(f"held steady:  update {outcome.update_cost:.1f}, "
      f"miss {outcome.miss_cost:.1f}, reward {outcome.reward:.3f}")

# the observation never exposes the popularity law; agents must infer it
vec = encode_global_state(env.state)
print(f"\nglobal observation dim: {len(vec)} "
      f"(demand tensor {cfg.num_content}x{cfg.num_sbs}x{cfg.num_sbs} "
      f"+ cache matrix)")

# splitting an item across stations is the coded-caching trick: two halves
# at two reachable stations reconstruct the item with zero miss
tiny = NetworkConfig(num_sbs=2, num_content=2, cache_capacity=1.0,
                     max_users_per_sbs=10, ppp_density=0.0)
both = np.array([[0.5, 0.5], [0.0, 0.0]])
from coopcache.env import UserBatch
shared_user = UserBatch(positions=np.array([[500.0, 500.0]]),
                        requests=np.array([0]),
                        connectivity=np.array([[True, True]]))
c, upd, miss = compute_traffic_cost(both, both, shared_user, 1.0)
print(f"\nsplit halves, shared user: miss {miss:.1f} "
      f"(reward {compute_reward(c, 1, 1.0) + 0.0:.1f}: "
      "both halves reconstruct the item)")
single_user = UserBatch(positions=np.array([[100.0, 500.0]]),
                        requests=np.array([0]),
                        connectivity=np.array([[True, False]]))
c, upd, miss = compute_traffic_cost(both, both, single_user, 1.0)
print(f"split halves, single-station user: miss {miss:.1f} "
      "(only half reachable)")
