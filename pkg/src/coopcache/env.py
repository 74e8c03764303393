"""
Discrete-epoch simulator of a small-cell network with coded caching.

Per epoch: users arrive by a Poisson point process, each requests one
content item drawn from a (possibly evolving) Zipf law, and is connected
to every base station within the communication radius.  Stations hold
fractional cache shares l[f, b] in [0, 1] with a per-station budget L.
Replacing the allocation costs fronthaul traffic for the increased
fractions; requests whose reachable fractions sum below 1 cost the
shortfall.  The reward is the negative per-request traffic.

All randomness derives from (seed, epoch) so a trajectory is fully
reproducible and can be resumed from a plain-text snapshot.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

FEASIBILITY_TOL = 1e-6
SNAPSHOT_HEADER = "coopcache-env-snapshot v1"


class InfeasibleActionError(ValueError):
    """Raised when a caching action violates the per-station feasible set."""


@dataclass(frozen=True)
class NetworkConfig:
    """Static network geometry and catalog parameters."""

    area_side_m: float = 1000.0
    num_sbs: int = 4
    comm_radius_m: float = 500.0
    max_users_per_sbs: int = 100
    ppp_density: float = 9.5e-5
    num_content: int = 20
    cache_capacity: float = 4.0
    content_size: float = 1.0

    def __post_init__(self):
        if self.num_sbs < 1:
            raise ValueError("num_sbs must be >= 1")
        if self.num_content < 1:
            raise ValueError("num_content must be >= 1")
        if not 0.0 < self.cache_capacity <= self.num_content:
            raise ValueError("cache_capacity must satisfy 0 < L <= num_content")
        if self.comm_radius_m <= 0.0:
            raise ValueError("comm_radius_m must be positive")
        if self.max_users_per_sbs < 1:
            raise ValueError("max_users_per_sbs must be >= 1")
        if self.area_side_m <= 0.0:
            raise ValueError("area_side_m must be positive")
        if self.ppp_density < 0.0:
            raise ValueError("ppp_density must be non-negative")
        if self.content_size <= 0.0:
            raise ValueError("content_size must be positive")


@dataclass(frozen=True)
class PopularityModel:
    """Zipf request law over item ranks, with an optional reshuffle schedule.

    ``ranks[f]`` is the popularity rank of item f (1 = most popular), a
    permutation of 1..F.  Request probabilities are rank^-kappa, normalized.
    Every ``shuffle_period`` epochs the permutation is redrawn and kappa is
    resampled from ``skew_choices``; ``shuffle_period=None`` freezes the law.
    """

    ranks: tuple
    kappa: float
    shuffle_period: int | None = 500
    skew_choices: tuple = (0.5, 1.0, 1.5, 2.0)

    def __post_init__(self):
        f = len(self.ranks)
        if sorted(self.ranks) != list(range(1, f + 1)):
            raise ValueError("ranks must be a permutation of 1..F")
        if self.shuffle_period is not None and self.shuffle_period < 1:
            raise ValueError("shuffle_period must be >= 1 or None")

    @property
    def num_content(self):
        return len(self.ranks)

    def probabilities(self):
        ranks = np.asarray(self.ranks, dtype=float)
        if math.isinf(self.kappa):
            # degenerate law: all mass on the rank-1 item
            p = np.zeros(len(ranks))
            p[np.argmin(ranks)] = 1.0
            return p
        w = ranks ** (-self.kappa)
        return w / w.sum()

    @staticmethod
    def random(num_content, rng, skew_choices=(0.5, 1.0, 1.5, 2.0),
               shuffle_period=500):
        ranks = tuple(int(r) for r in rng.permutation(num_content) + 1)
        kappa = float(rng.choice(np.asarray(skew_choices, dtype=float)))
        return PopularityModel(ranks=ranks, kappa=kappa,
                               shuffle_period=shuffle_period,
                               skew_choices=tuple(float(s) for s in skew_choices))


@dataclass
class UserBatch:
    """One epoch's active users: positions, single requests, connectivity."""

    positions: np.ndarray   # (n, 2) meters
    requests: np.ndarray    # (n,) item indices in 0..F-1
    connectivity: np.ndarray  # (n, B) bool, True iff within radius (post cap)

    @property
    def num_users(self):
        return len(self.requests)

    def per_sbs_counts(self):
        return self.connectivity.sum(axis=0).astype(int)

    @staticmethod
    def empty(num_sbs):
        return UserBatch(positions=np.zeros((0, 2)),
                         requests=np.zeros(0, dtype=np.int64),
                         connectivity=np.zeros((0, num_sbs), dtype=bool))


@dataclass
class StepOutcome:
    epoch: int
    reward: float
    traffic_cost: float
    update_cost: float
    miss_cost: float
    num_users: int
    state: "EnvState"


@dataclass
class EnvState:
    """Full system snapshot at the start of an epoch."""

    config: NetworkConfig
    epoch: int
    users: UserBatch
    cache: np.ndarray          # (F, B), entries in [0,1], column sums <= L
    popularity: PopularityModel
    seed: int

    def digest(self):
        h = hashlib.sha256()
        h.update(str(self.epoch).encode())
        h.update(np.ascontiguousarray(self.cache).tobytes())
        h.update(np.ascontiguousarray(self.users.positions).tobytes())
        h.update(np.ascontiguousarray(self.users.requests).tobytes())
        h.update(np.ascontiguousarray(self.users.connectivity).tobytes())
        h.update(repr(self.popularity.ranks).encode())
        h.update(repr(self.popularity.kappa).encode())
        return h.hexdigest()


def _epoch_rng(seed, epoch, salt):
    # all per-epoch randomness keys off (seed, epoch, salt): resumable
    return np.random.default_rng([int(seed), int(epoch), int(salt)])


def place_sbs(config):
    """Station coordinates: a centered k x k grid when B is a perfect square,
    otherwise a centered row-major grid with 300 m spacing."""
    b = config.num_sbs
    side = config.area_side_m
    k = math.isqrt(b)
    if k * k == b:
        cell = side / k
        coords = [((i + 0.5) * cell, (j + 0.5) * cell)
                  for i in range(k) for j in range(k)]
        return np.asarray(coords)
    spacing = 300.0
    cols = math.ceil(math.sqrt(b))
    rows = math.ceil(b / cols)
    x0 = (side - (cols - 1) * spacing) / 2.0
    y0 = (side - (rows - 1) * spacing) / 2.0
    coords = [(x0 + (i % cols) * spacing, y0 + (i // cols) * spacing)
              for i in range(b)]
    return np.asarray(coords)


def connectivity_matrix(positions, sbs_positions, radius):
    """Boolean (n, B) matrix; the boundary distance == radius counts as connected."""
    if len(positions) == 0:
        return np.zeros((0, len(sbs_positions)), dtype=bool)
    diff = positions[:, None, :] - sbs_positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    return dist <= radius


def sample_users(config, sbs_positions, popularity, rng):
    """Draw one epoch's user batch.

    Count ~ Poisson(density * area); positions i.i.d. uniform; requests from
    the Zipf law.  Each station keeps at most ``max_users_per_sbs`` connected
    users in arrival order; users left with no station are dropped.
    """
    area = config.area_side_m ** 2
    n = int(rng.poisson(config.ppp_density * area))
    if n == 0:
        return UserBatch.empty(config.num_sbs)
    positions = rng.uniform(0.0, config.area_side_m, size=(n, 2))
    requests = rng.choice(config.num_content, size=n, p=popularity.probabilities())
    conn = connectivity_matrix(positions, sbs_positions, config.comm_radius_m)
    cap = config.max_users_per_sbs
    for b in range(config.num_sbs):
        attached = np.flatnonzero(conn[:, b])
        if len(attached) > cap:
            conn[attached[cap:], b] = False
    keep = conn.any(axis=1)
    return UserBatch(positions=positions[keep],
                     requests=requests[keep].astype(np.int64),
                     connectivity=conn[keep])


def evolve_popularity(popularity, epoch, rng):
    """Redraw the rank permutation and skewness every shuffle_period epochs."""
    period = popularity.shuffle_period
    if period is None or epoch == 0 or epoch % period != 0:
        return popularity
    return PopularityModel.random(popularity.num_content, rng,
                                  skew_choices=popularity.skew_choices,
                                  shuffle_period=period)


def compute_traffic_cost(cache_prev, cache_next, users, content_size):
    """Fronthaul bits for one transition: cache updates plus request misses.

    update = sum_{f,b} max(l'[f,b] - l[f,b], 0) * s
    miss   = sum_k max(0, 1 - sum_b l'[f_k,b] e[k,b]) * s
    """
    cache_prev = np.asarray(cache_prev, dtype=float)
    cache_next = np.asarray(cache_next, dtype=float)
    if cache_prev.shape != cache_next.shape:
        raise ValueError("cache allocations have mismatched shapes: "
                         f"{cache_prev.shape} vs {cache_next.shape}")
    s = float(content_size)
    update_cost = float(np.maximum(cache_next - cache_prev, 0.0).sum()) * s
    if users.num_users == 0:
        miss_cost = 0.0
    else:
        coverage = (cache_next[users.requests, :] * users.connectivity).sum(axis=1)
        miss_cost = float(np.maximum(0.0, 1.0 - coverage).sum()) * s
    return update_cost + miss_cost, update_cost, miss_cost


def compute_reward(traffic_cost, num_users, content_size):
    """Negative traffic per request; an empty epoch divides by one user."""
    denom = max(int(num_users), 1) * float(content_size)
    return -float(traffic_cost) / denom


def validate_action(action, config, tol=FEASIBILITY_TOL):
    action = np.asarray(action, dtype=float)
    f, b = config.num_content, config.num_sbs
    if action.shape != (f, b):
        raise InfeasibleActionError(f"action shape {action.shape} != ({f}, {b})")
    if not np.all(np.isfinite(action)):
        raise InfeasibleActionError("action contains non-finite entries")
    if action.min() < -tol or action.max() > 1.0 + tol:
        raise InfeasibleActionError("action entry outside [0, 1]")
    sums = action.sum(axis=0)
    if sums.max() > config.cache_capacity + tol:
        raise InfeasibleActionError(
            f"per-station budget exceeded: max column sum {sums.max():.9f} "
            f"> {config.cache_capacity}")
    return action


def _sanitize_allocation(action, capacity):
    # snap tolerance-level overshoot back onto the feasible set
    out = np.clip(action, 0.0, 1.0)
    sums = out.sum(axis=0)
    over = sums > capacity
    if np.any(over):
        out[:, over] *= capacity / sums[over]
    return out


def encode_global_state(state):
    """Fixed-length observation: co-connectivity demand tensor, then cache.

    demand[b, f, b'] = (#users connected to station b requesting f that are
    also connected to b') / K, raveled station-major so that station b's
    local block is contiguous; followed by per-station cache columns.
    """
    cfg = state.config
    f_n, b_n = cfg.num_content, cfg.num_sbs
    demand = demand_tensor(state)
    cache_blocks = state.cache.T.ravel()
    return np.concatenate([demand.transpose(1, 0, 2).reshape(f_n * b_n * b_n),
                           cache_blocks])


def demand_tensor(state):
    """(F, B, B) tensor of co-connectivity request counts normalized by K."""
    cfg = state.config
    f_n, b_n = cfg.num_content, cfg.num_sbs
    d = np.zeros((f_n, b_n, b_n))
    users = state.users
    if users.num_users:
        e = users.connectivity.astype(float)
        for f in np.unique(users.requests):
            ef = e[users.requests == f]
            d[f] = ef.T @ ef
    return d / cfg.max_users_per_sbs


def encode_local_observation(state, b):
    """Station b's slice of the global encoding: its demand block + cache column."""
    cfg = state.config
    if not 0 <= b < cfg.num_sbs:
        raise ValueError(f"station index {b} out of range")
    d = demand_tensor(state)
    return np.concatenate([d[:, b, :].ravel(), state.cache[:, b]])


def global_state_dim(config):
    f, b = config.num_content, config.num_sbs
    return f * b * b + f * b


def local_obs_dim(config):
    f, b = config.num_content, config.num_sbs
    return f * b + f


class SmallCellEnv:
    """Sequential simulator; one instance owns one trajectory.

    ``step`` replaces the cache with the joint action, evolves popularity,
    samples the next user batch, and scores the transition against the new
    requests.  Identical (config, seed) reproduces the trajectory bit for bit.
    """

    def __init__(self, config, seed, popularity=None, initial_cache=None,
                 skew_choices=(0.5, 1.0, 1.5, 2.0), shuffle_period=500):
        self.config = config
        self.seed = int(seed)
        self.sbs_positions = place_sbs(config)
        if popularity is None:
            popularity = PopularityModel.random(
                config.num_content, _epoch_rng(self.seed, 0, 0),
                skew_choices=skew_choices, shuffle_period=shuffle_period)
        if initial_cache is None:
            cache = np.zeros((config.num_content, config.num_sbs))
        else:
            cache = _sanitize_allocation(
                validate_action(initial_cache, config), config.cache_capacity)
        users = sample_users(config, self.sbs_positions, popularity,
                             _epoch_rng(self.seed, 0, 1))
        self.state = EnvState(config=config, epoch=0, users=users,
                              cache=cache, popularity=popularity, seed=self.seed)

    def step(self, action):
        cfg = self.config
        action = validate_action(action, cfg)
        cache_next = _sanitize_allocation(action, cfg.cache_capacity)
        next_epoch = self.state.epoch + 1
        popularity = evolve_popularity(self.state.popularity, next_epoch,
                                       _epoch_rng(self.seed, next_epoch, 0))
        users = sample_users(cfg, self.sbs_positions, popularity,
                             _epoch_rng(self.seed, next_epoch, 1))
        cost, update_cost, miss_cost = compute_traffic_cost(
            self.state.cache, cache_next, users, cfg.content_size)
        reward = compute_reward(cost, users.num_users, cfg.content_size)
        self.state = EnvState(config=cfg, epoch=next_epoch, users=users,
                              cache=cache_next, popularity=popularity,
                              seed=self.seed)
        return StepOutcome(epoch=next_epoch, reward=reward, traffic_cost=cost,
                           update_cost=update_cost, miss_cost=miss_cost,
                           num_users=users.num_users, state=self.state)

    # ---- plain-text snapshot (versioned, resume-exact) ----

    def save_snapshot(self, path):
        lines = [SNAPSHOT_HEADER]
        cfg = self.config
        st = self.state
        put = lines.append
        put(f"seed={self.seed}")
        put(f"epoch={st.epoch}")
        for name in ("area_side_m", "num_sbs", "comm_radius_m",
                     "max_users_per_sbs", "ppp_density", "num_content",
                     "cache_capacity", "content_size"):
            put(f"config.{name}={getattr(cfg, name)!r}")
        pop = st.popularity
        put("popularity.ranks=" + ",".join(str(r) for r in pop.ranks))
        put(f"popularity.kappa={pop.kappa!r}")
        put("popularity.shuffle_period=" +
            ("none" if pop.shuffle_period is None else str(pop.shuffle_period)))
        put("popularity.skew_choices=" +
            ",".join(repr(float(s)) for s in pop.skew_choices))
        put("cache=" + ",".join(repr(float(v)) for v in st.cache.ravel()))
        put(f"users.count={st.users.num_users}")
        put("users.positions=" + ";".join(
            f"{float(x)!r},{float(y)!r}" for x, y in st.users.positions))
        put("users.requests=" + ",".join(str(r) for r in st.users.requests))
        put("users.connectivity=" + ";".join(
            "".join("1" if v else "0" for v in row)
            for row in st.users.connectivity))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load_snapshot(cls, path):
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != SNAPSHOT_HEADER:
            raise ValueError(f"unrecognized snapshot header in {path}")
        kv = {}
        for ln in lines[1:]:
            if ln:
                key, _, val = ln.partition("=")
                kv[key] = val
        cfg = NetworkConfig(
            area_side_m=float(kv["config.area_side_m"]),
            num_sbs=int(kv["config.num_sbs"]),
            comm_radius_m=float(kv["config.comm_radius_m"]),
            max_users_per_sbs=int(kv["config.max_users_per_sbs"]),
            ppp_density=float(kv["config.ppp_density"]),
            num_content=int(kv["config.num_content"]),
            cache_capacity=float(kv["config.cache_capacity"]),
            content_size=float(kv["config.content_size"]))
        period = kv["popularity.shuffle_period"]
        pop = PopularityModel(
            ranks=tuple(int(r) for r in kv["popularity.ranks"].split(",")),
            kappa=float(kv["popularity.kappa"]),
            shuffle_period=None if period == "none" else int(period),
            skew_choices=tuple(float(s)
                               for s in kv["popularity.skew_choices"].split(",")))
        cache = np.fromiter((float(v) for v in kv["cache"].split(",")),
                            dtype=float).reshape(cfg.num_content, cfg.num_sbs)
        n = int(kv["users.count"])
        if n:
            positions = np.asarray([[float(c) for c in pair.split(",")]
                                    for pair in kv["users.positions"].split(";")])
            requests = np.fromiter((int(r) for r in kv["users.requests"].split(",")),
                                   dtype=np.int64)
            conn = np.asarray([[ch == "1" for ch in row]
                               for row in kv["users.connectivity"].split(";")])
        else:
            positions = np.zeros((0, 2))
            requests = np.zeros(0, dtype=np.int64)
            conn = np.zeros((0, cfg.num_sbs), dtype=bool)
        env = cls.__new__(cls)
        env.config = cfg
        env.seed = int(kv["seed"])
        env.sbs_positions = place_sbs(cfg)
        env.state = EnvState(config=cfg, epoch=int(kv["epoch"]),
                             users=UserBatch(positions, requests, conn),
                             cache=cache, popularity=pop, seed=env.seed)
        return env
