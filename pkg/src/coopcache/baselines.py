"""
Non-learning cache-updating policies and a tiny exhaustive oracle.

CO-CU minimizes the current epoch's empirical miss + update cost jointly
over all stations (projected subgradient); LO-CU solves the same objective
per station on local requests only (exact greedy); RCU draws a random
full-budget allocation.  The oracle enumerates quantized action sequences
on instances small enough to brute-force.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .env import compute_reward


@dataclass
class RequestStats:
    """Per-station observed demand for the current epoch."""

    counts: np.ndarray        # (F, B) requests for f seen at station b
    requests: np.ndarray      # (n,) per-user requested item
    connectivity: np.ndarray  # (n, B) bool

    @staticmethod
    def from_users(users, num_content):
        n = users.num_users
        b = users.connectivity.shape[1]
        counts = np.zeros((num_content, b))
        if n:
            np.add.at(counts, users.requests,
                      users.connectivity.astype(float))
        return RequestStats(counts=counts, requests=users.requests,
                            connectivity=users.connectivity)


def estimate_local_popularity(counts):
    """Column-normalized request counts; an idle station falls back to uniform."""
    counts = np.asarray(counts, dtype=float)
    f = counts.shape[0]
    totals = counts.sum(axis=0)
    p = np.full_like(counts, 1.0 / f)
    active = totals > 0
    p[:, active] = counts[:, active] / totals[active]
    return p


def _miss_update_objective(action, stats, current_cache):
    """Current-epoch empirical traffic: per-user miss + cache-raise cost."""
    update = np.maximum(action - current_cache, 0.0).sum()
    if len(stats.requests) == 0:
        return float(update)
    coverage = (action[stats.requests, :] * stats.connectivity).sum(axis=1)
    miss = np.maximum(0.0, 1.0 - coverage).sum()
    return float(update + miss)


def _project_box_budget(col, capacity):
    """Euclidean projection onto {0 <= x <= 1, sum(x) <= capacity}.

    When the clipped point is over budget, the projection is
    clip(col - theta, 0, 1) for the theta that lands the sum exactly on the
    budget; found exactly by walking the sorted breakpoints.
    """
    out = np.clip(col, 0.0, 1.0)
    total = out.sum()
    if total <= capacity + 1e-12:
        return out
    breakpoints = np.unique(np.concatenate([col - 1.0, col]))
    breakpoints = breakpoints[breakpoints > 0.0]
    theta_prev, g_prev = 0.0, total
    for theta in breakpoints:
        g = np.clip(col - theta, 0.0, 1.0).sum()
        if g <= capacity:
            if g == g_prev:
                return np.clip(col - theta, 0.0, 1.0)
            t = theta_prev + (g_prev - capacity) * (theta - theta_prev) \
                / (g_prev - g)
            return np.clip(col - t, 0.0, 1.0)
        theta_prev, g_prev = theta, g
    return np.zeros_like(col)


def co_cu_decide(stats, current_cache, capacity, iterations=500):
    """Joint decision by projected subgradient descent on the empirical cost.

    Deterministic: warm-started from the current cache, step c/sqrt(i) with
    c set from the first subgradient's magnitude, Euclidean projection onto
    the per-station box-and-budget set; the best feasible iterate wins.
    (A multiplicative over-budget rescale stalls at interior points up to
    ~0.3 above the optimum, so the metric projection is used instead.)
    """
    current_cache = np.asarray(current_cache, dtype=float)
    f, b = current_cache.shape
    e = stats.connectivity.astype(float)
    a = current_cache.copy()
    best = a.copy()
    best_val = _miss_update_objective(a, stats, current_cache)
    step_scale = None
    for i in range(1, iterations + 1):
        grad = (a > current_cache).astype(float)
        if len(stats.requests):
            coverage = (a[stats.requests, :] * e).sum(axis=1)
            unsat = coverage < 1.0
            if np.any(unsat):
                np.add.at(grad, stats.requests[unsat], -e[unsat])
        if step_scale is None:
            step_scale = 2.0 / max(1.0, np.abs(grad).max())
        a = a - (step_scale / np.sqrt(i)) * grad
        for col in range(b):
            a[:, col] = _project_box_budget(a[:, col], capacity)
        val = _miss_update_objective(a, stats, current_cache)
        if val < best_val:
            best_val = val
            best = a.copy()
    return best


def lo_cu_decide(counts_b, current_cache_b, capacity):
    """Exact greedy for one station's local objective.

    Raising item f is worth counts[f] per unit below the current fraction
    (no update cost) and counts[f]-1 per unit above it; budget goes to
    segments in descending marginal value while the marginal is >= 0,
    fractional at the boundary.
    """
    counts_b = np.asarray(counts_b, dtype=float)
    current = np.asarray(current_cache_b, dtype=float)
    f = len(counts_b)
    segments = []  # (marginal, item, lo, hi)
    for item in range(f):
        l = current[item]
        if l > 0.0:
            segments.append((counts_b[item], item, 0.0, l))
        if l < 1.0:
            segments.append((counts_b[item] - 1.0, item, l, 1.0))
    segments.sort(key=lambda s: (-s[0], s[1], s[2]))
    a = np.zeros(f)
    budget = capacity
    for marginal, item, lo, hi in segments:
        if budget <= 0.0 or marginal < 0.0:
            break
        width = min(hi - lo, budget)
        a[item] += width
        budget -= width
    return a


def rcu_decide(num_content, num_sbs, capacity, rng):
    """Random allocation per station, scaled so the clipped sum equals L.

    Iterative water-filling: scale the uniform draw, clip at 1, and
    redistribute the residual over unclipped entries until the sum lands on
    the budget.
    """
    out = np.zeros((num_content, num_sbs))
    for b in range(num_sbs):
        u = rng.uniform(0.0, 1.0, size=num_content)
        col = np.zeros(num_content)
        free = np.ones(num_content, dtype=bool)
        remaining = capacity
        while remaining > 1e-9 and free.any():
            scale = remaining / u[free].sum()
            cand = u * scale
            cand[~free] = 0.0
            newly = free & (col + cand >= 1.0)
            if not newly.any():
                col[free] += cand[free]
                break
            col[newly] = 1.0
            free &= ~newly
            remaining = capacity - col.sum()
        out[:, b] = col
    return out


@dataclass(frozen=True)
class TinyMdp:
    """Finite-horizon instance small enough for exhaustive search.

    ``request_schedule[t]`` lists the users arriving at epoch t+1 as
    (item, connectivity-tuple) pairs; requests are deterministic.
    """

    num_sbs: int
    num_content: int
    capacity: float
    horizon: int
    grid_step: float
    initial_cache: tuple  # ((l_f0..), per station) column tuples
    request_schedule: tuple
    discount: float = 1.0
    content_size: float = 1.0

    def __post_init__(self):
        if self.num_sbs > 2 or self.num_content > 3 or self.horizon > 3:
            raise ValueError("instance exceeds brute-force size limits")
        if self.grid_step < 0.25:
            raise ValueError("grid step below 0.25 is too fine to enumerate")
        if len(self.request_schedule) != self.horizon:
            raise ValueError("request_schedule must cover the horizon")


def _station_grid(num_content, capacity, step):
    levels = np.arange(0.0, 1.0 + 1e-12, step)
    vectors = [v for v in itertools.product(levels, repeat=num_content)
               if sum(v) <= capacity + 1e-9]
    return vectors


def _sequence_value(mdp, sequence):
    cache = np.asarray(mdp.initial_cache, dtype=float).T  # (F, B)
    total = 0.0
    for t, joint in enumerate(sequence):
        nxt = np.asarray(joint, dtype=float).T
        update = np.maximum(nxt - cache, 0.0).sum() * mdp.content_size
        users = mdp.request_schedule[t]
        miss = 0.0
        for item, conn in users:
            covered = sum(nxt[item, b] for b in range(mdp.num_sbs) if conn[b])
            miss += max(0.0, 1.0 - covered) * mdp.content_size
        reward = compute_reward(update + miss, len(users), mdp.content_size)
        total += (mdp.discount ** t) * reward
        cache = nxt
    return total


def brute_force_oracle(mdp):
    """Exhaustive optimum of the quantized finite-horizon problem.

    Returns (optimal value, list of optimal action sequences); every
    sequence is a tuple over epochs of per-station action tuples.
    """
    station_actions = _station_grid(mdp.num_content, mdp.capacity,
                                    mdp.grid_step)
    joint_actions = list(itertools.product(station_actions,
                                           repeat=mdp.num_sbs))
    best_val = -np.inf
    best_seqs = []
    for sequence in itertools.product(joint_actions, repeat=mdp.horizon):
        val = _sequence_value(mdp, sequence)
        if val > best_val + 1e-12:
            best_val = val
            best_seqs = [sequence]
        elif abs(val - best_val) <= 1e-12:
            best_seqs.append(sequence)
    return best_val, best_seqs
