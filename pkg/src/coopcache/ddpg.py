"""
Homotopy-penalized deterministic policy gradient machinery.

The actor emits a scaled-softmax proto-action whose blocks each sum to the
cache budget L; mapping it elementwise through min(1, .) makes it feasible
but non-smooth, so training augments the reward with a storage-slack penalty
weighted by a non-positive coefficient lambda that anneals to zero on a slow
schedule.  lambda identically zero recovers plain DDPG.
"""

import json
from dataclasses import dataclass

import numpy as np

from .nets import AdamState, DenseNet, NetSpec, adam_step


def map_action(proto):
    """Clip proto entries at 1; block sums only shrink, so feasibility holds."""
    return np.minimum(np.asarray(proto, dtype=float), 1.0)


def map_action_jacobian(proto):
    """Diagonal of the clip map: 1 below the threshold, 0 at and above it."""
    return (np.asarray(proto, dtype=float) < 1.0).astype(float)


def storage_slack(mapped_joint, num_stations, capacity):
    """Unused storage after mapping: B*L minus the l1-norm of the joint action."""
    return float(num_stations * capacity - np.abs(mapped_joint).sum())


def homotopy_reward(reward, slack_prev, lam):
    """Penalized reward R + lambda * slack; equals R when lambda is 0."""
    return reward + lam * slack_prev


def project_feasible(action, capacity, block_size):
    """Clip to [0,1], then rescale any block whose sum exceeds the budget."""
    out = np.clip(np.asarray(action, dtype=float), 0.0, 1.0)
    blocks = out.reshape(-1, block_size)
    sums = blocks.sum(axis=1)
    over = sums > capacity
    if np.any(over):
        blocks[over] *= capacity / sums[over, None]
    return blocks.reshape(out.shape)


@dataclass
class OuNoise:
    """Mean-reverting exploration noise with a diminishing amplitude.

    Uses the exact transition of the mean-zero OU process so the stationary
    variance is sigma^2 / (2 theta) regardless of the sampling interval.
    """

    dim: int
    theta: float = 0.15
    sigma: float = float(np.sqrt(0.3))
    dt: float = 1.0
    beta: float = 0.9
    beta_decay: float = 0.995
    beta_floor: float = 1e-4
    x: np.ndarray = None

    def __post_init__(self):
        if self.x is None:
            self.x = np.zeros(self.dim)
        self._decay = float(np.exp(-self.theta * self.dt))
        self._noise_scale = self.sigma * np.sqrt(
            (1.0 - self._decay ** 2) / (2.0 * self.theta))

    def sample(self, rng):
        self.x = self._decay * self.x \
            + self._noise_scale * rng.standard_normal(self.dim)
        return self.x

    def decay_amplitude(self):
        self.beta = max(self.beta * self.beta_decay, self.beta_floor)


def explore_action(mapped_action, noise, rng, capacity, block_size):
    """Perturb, re-project into the feasible set, then decay the amplitude."""
    perturbed = mapped_action + noise.beta * noise.sample(rng)
    out = project_feasible(perturbed, capacity, block_size)
    noise.decay_amplitude()
    return out


@dataclass
class HomotopySchedule:
    """Non-positive penalty weight annealed to zero in I slow-circle steps."""

    lam: float
    lam_min: float
    deltas: tuple
    period: int
    applied: int = 0

    def __post_init__(self):
        if self.lam_min > 0.0 or self.lam > 0.0:
            raise ValueError("lambda values must be non-positive")
        if any(d <= 0.0 for d in self.deltas):
            raise ValueError("deltas must be positive")
        if self.deltas and abs(sum(self.deltas) + self.lam_min) > 1e-12:
            raise ValueError("deltas must sum to -lambda_min")
        if self.period < 1:
            raise ValueError("period must be >= 1")

    @staticmethod
    def from_lambda_min(lam_min, num_steps=10, period=1000):
        lam_min = float(lam_min)
        if lam_min == 0.0:
            return HomotopySchedule(lam=0.0, lam_min=0.0, deltas=(),
                                    period=period)
        deltas = tuple(-lam_min / num_steps for _ in range(num_steps))
        return HomotopySchedule(lam=lam_min, lam_min=lam_min, deltas=deltas,
                                period=period)

    def maybe_step(self, epoch):
        """Advance lambda when the epoch hits a period multiple; no-op after
        the last delta has been applied."""
        if self.applied >= len(self.deltas):
            return self.lam
        if epoch > 0 and epoch % self.period == 0:
            self.lam += self.deltas[self.applied]
            self.applied += 1
            if self.applied == len(self.deltas):
                self.lam = 0.0  # sum(deltas) == -lam_min; drop float residue
        return self.lam


@dataclass
class Experience:
    state: np.ndarray
    action: np.ndarray
    reward_h: float
    next_state: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring; the oldest experience is overwritten first."""

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards_h = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.size = 0
        self.cursor = 0

    def add(self, state, action, reward_h, next_state):
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards_h[i] = reward_h
        self.next_states[i] = next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, n):
        if self.size < n:
            raise ValueError(f"buffer holds {self.size} < {n} experiences")
        idx = rng.integers(0, self.size, size=n)
        return (self.states[idx], self.actions[idx], self.rewards_h[idx],
                self.next_states[idx])


@dataclass
class TrainableNet:
    net: DenseNet
    params: np.ndarray
    adam: AdamState

    @staticmethod
    def create(spec, rng):
        net = DenseNet(spec)
        return TrainableNet(net=net, params=net.init_params(rng),
                            adam=AdamState.zeros(net.num_params))


@dataclass
class ActorCriticPair:
    """Online actor/critic plus target copies initialized as exact clones."""

    actor: TrainableNet
    critic: TrainableNet
    target_actor_params: np.ndarray
    target_critic_params: np.ndarray
    state_dim: int
    action_dim: int

    @staticmethod
    def create(state_dim, action_dim, actor_hidden, critic_hidden,
               head_scale, head_groups, hidden_activation, actor_rng,
               critic_rng):
        actor_spec = NetSpec(
            layer_sizes=(state_dim, *actor_hidden, action_dim),
            hidden_activation=hidden_activation,
            head="softmax_scaled", head_scale=head_scale,
            head_groups=head_groups)
        critic_spec = NetSpec(
            layer_sizes=(state_dim + action_dim, *critic_hidden, 1),
            hidden_activation=hidden_activation, head="linear")
        actor = TrainableNet.create(actor_spec, actor_rng)
        critic = TrainableNet.create(critic_spec, critic_rng)
        return ActorCriticPair(actor=actor, critic=critic,
                               target_actor_params=actor.params.copy(),
                               target_critic_params=critic.params.copy(),
                               state_dim=state_dim, action_dim=action_dim)

    def greedy_action(self, state_vec):
        proto, _ = self.actor.net.forward(self.actor.params, state_vec)
        return map_action(proto), proto


def critic_train_step(pair, batch, gamma, lr):
    """One Adam descent step on the mean-squared Bellman error.

    Targets come from the target actor/critic and are treated as constants.
    """
    states, actions, rewards_h, next_states = batch
    proto2, _ = pair.actor.net.forward(pair.target_actor_params, next_states)
    next_actions = map_action(proto2)
    q2, _ = pair.critic.net.forward(pair.target_critic_params,
                                    np.hstack([next_states, next_actions]))
    targets = rewards_h + gamma * q2[:, 0]
    q, cache = pair.critic.net.forward(pair.critic.params,
                                       np.hstack([states, actions]))
    err = q[:, 0] - targets
    loss = float(np.mean(err ** 2))
    upstream = (2.0 * err / len(err))[:, None]
    grads, _ = pair.critic.net.backward(pair.critic.params, cache, upstream)
    adam_step(pair.critic.params, grads, pair.critic.adam, lr)
    return loss


def actor_train_step(pair, batch, lr):
    """One Adam ascent step along the chained deterministic policy gradient.

    grad = dQ/dA at A = clip(mu(S)), through the clip Jacobian, through the
    actor; entries already at the clip threshold contribute nothing.
    """
    states = batch[0]
    n = len(states)
    proto, actor_cache = pair.actor.net.forward(pair.actor.params, states)
    actions = map_action(proto)
    _, critic_cache = pair.critic.net.forward(
        pair.critic.params, np.hstack([states, actions]))
    upstream = np.full((n, 1), 1.0 / n)
    _, input_grads = pair.critic.net.backward(pair.critic.params,
                                              critic_cache, upstream)
    dq_da = input_grads[:, pair.state_dim:]
    dproto = dq_da * map_action_jacobian(proto)
    grads, _ = pair.actor.net.backward(pair.actor.params, actor_cache, dproto)
    adam_step(pair.actor.params, -grads, pair.actor.adam, lr)
    return float(np.linalg.norm(grads))


def rng_state_json(rng):
    return json.dumps(rng.bit_generator.state)


def rng_from_state_json(state_json):
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(state_json)
    return rng
