"""
System operation at three control levels, plus non-learning baselines.

Centralized: one agent maps the global state to the joint caching action.
Partially decentralized: stations act from local observations; a central
critic over (global state, all actions) trains the local actors.
Fully decentralized: independent learners per station sharing only the
scalar penalized reward.

Every epoch also meters fronthaul dimensions exchanged with the cloud
processor: 3*sum_b|K_b| + B*F for centrally-coordinated phases, 2B for
fully-decentralized training, 0 where stations act purely locally.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import baselines as bl
from .ddpg import (ActorCriticPair, HomotopySchedule, OuNoise, ReplayBuffer,
                   TrainableNet, actor_train_step, critic_train_step,
                   explore_action, homotopy_reward, map_action,
                   map_action_jacobian, rng_from_state_json, rng_state_json,
                   storage_slack)
from .env import encode_global_state, encode_local_observation, \
    global_state_dim, local_obs_dim
from .nets import NetSpec, adam_step, soft_update

ACTOR_SEED_SALT = 20
CRITIC_SEED_SALT = 21
OU_SEED_SALT = 30
SAMPLE_SEED_SALT = 40
BASELINE_SEED_SALT = 60

CONTROLLER_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LearnerSettings:
    """Hyperparameters shared by all learner modes."""

    actor_hidden: tuple = (256, 128, 64)
    critic_hidden: tuple = (512, 512, 512)
    hidden_activation: str = "relu"
    actor_lr: float = 0.01
    critic_lr: float = 0.001
    lr_decay_power: float = 0.9
    lr_horizon: int = 100_000
    tau: float = 0.001
    gamma: float = 0.99
    batch_size: int = 100
    buffer_capacity: int = 5000
    lambda_min: float = -0.005
    lambda_steps: int = 10
    lambda_period: int = 1000
    beta_init: float = 0.9
    beta_decay: float = 0.995
    beta_floor: float = 1e-4
    ou_theta: float = 0.15


@dataclass
class FronthaulMeter:
    """Dimension counters for CP<->station exchanges; reset each epoch."""

    epoch_actual: float = 0.0
    epoch_worst: float = 0.0
    total_train_actual: float = 0.0
    total_train_worst: float = 0.0
    total_eval_actual: float = 0.0
    total_eval_worst: float = 0.0

    def begin_epoch(self):
        self.epoch_actual = 0.0
        self.epoch_worst = 0.0

    def add(self, phase, actual, worst):
        self.epoch_actual += actual
        self.epoch_worst += worst
        if phase == "train":
            self.total_train_actual += actual
            self.total_train_worst += worst
        else:
            self.total_eval_actual += actual
            self.total_eval_worst += worst


def centralized_fronthaul(users_per_sbs, config):
    """State upload (3 dims per served user) plus joint decision download."""
    actual = 3.0 * float(np.sum(users_per_sbs)) \
        + config.num_sbs * config.num_content
    worst = 3.0 * config.num_sbs * config.max_users_per_sbs \
        + config.num_sbs * config.num_content
    return actual, worst


def _lr_schedules(settings):
    from .nets import LrSchedule
    return (LrSchedule(settings.actor_lr, settings.lr_decay_power,
                       settings.lr_horizon),
            LrSchedule(settings.critic_lr, settings.lr_decay_power,
                       settings.lr_horizon))


def action_vector_to_matrix(vec, num_content, num_sbs):
    return np.asarray(vec, dtype=float).reshape(num_sbs, num_content).T


def matrix_to_action_vector(matrix):
    return np.asarray(matrix, dtype=float).T.ravel()


def local_obs_slice(global_batch, b, num_content, num_sbs):
    """Columns of the global encoding that form station b's observation."""
    g = np.atleast_2d(global_batch)
    f = num_content
    d0, d1 = b * f * num_sbs, (b + 1) * f * num_sbs
    c0 = f * num_sbs * num_sbs + b * f
    out = np.hstack([g[:, d0:d1], g[:, c0:c0 + f]])
    return out if np.asarray(global_batch).ndim == 2 else out[0]


class CentralizedController:
    """One actor-critic over the global state and the joint action."""

    mode = "centralized"

    def __init__(self, env_config, settings, seed):
        self.config = env_config
        self.settings = settings
        self.seed = int(seed)
        f, b = env_config.num_content, env_config.num_sbs
        self.state_dim = global_state_dim(env_config)
        self.action_dim = f * b
        self.pair = ActorCriticPair.create(
            self.state_dim, self.action_dim, settings.actor_hidden,
            settings.critic_hidden, env_config.cache_capacity, b,
            settings.hidden_activation,
            np.random.default_rng([self.seed, ACTOR_SEED_SALT, 0]),
            np.random.default_rng([self.seed, CRITIC_SEED_SALT, 0]))
        self.buffer = ReplayBuffer(settings.buffer_capacity, self.state_dim,
                                   self.action_dim)
        self.noise = OuNoise(dim=self.action_dim, theta=settings.ou_theta,
                             sigma=float(np.sqrt(2.0 * settings.ou_theta)),
                             beta=settings.beta_init,
                             beta_decay=settings.beta_decay,
                             beta_floor=settings.beta_floor)
        self.ou_rng = np.random.default_rng([self.seed, OU_SEED_SALT, 0])
        self.sample_rng = np.random.default_rng([self.seed, SAMPLE_SEED_SALT, 0])
        self.schedule = HomotopySchedule.from_lambda_min(
            settings.lambda_min, settings.lambda_steps, settings.lambda_period)
        self.actor_lr, self.critic_lr = _lr_schedules(settings)
        self.meter = FronthaulMeter()
        self.epoch = 0

    def greedy_joint(self, state):
        s_vec = encode_global_state(state)
        mapped, proto = self.pair.greedy_action(s_vec)
        return s_vec, mapped, proto

    def train_epoch(self, env):
        cfg = self.config
        t = self.epoch
        users_per_sbs = env.state.users.per_sbs_counts()
        s_vec, mapped, _ = self.greedy_joint(env.state)
        slack = storage_slack(mapped, cfg.num_sbs, cfg.cache_capacity)
        beta = self.noise.beta
        action = explore_action(mapped, self.noise, self.ou_rng,
                                cfg.cache_capacity, cfg.num_content)
        outcome = env.step(action_vector_to_matrix(
            action, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        r_h = homotopy_reward(outcome.reward, slack, lam)
        s2_vec = encode_global_state(env.state)
        self.buffer.add(s_vec, action, r_h, s2_vec)
        critic_loss = float("nan")
        actor_gnorm = float("nan")
        if self.buffer.size >= self.settings.batch_size:
            batch = self.buffer.sample(self.sample_rng,
                                       self.settings.batch_size)
            critic_loss = critic_train_step(self.pair, batch,
                                            self.settings.gamma,
                                            self.critic_lr.rate(t))
            actor_gnorm = actor_train_step(self.pair, batch,
                                           self.actor_lr.rate(t))
            soft_update(self.pair.target_critic_params,
                        self.pair.critic.params, self.settings.tau)
            soft_update(self.pair.target_actor_params,
                        self.pair.actor.params, self.settings.tau)
        self.schedule.maybe_step(t)
        self.epoch += 1
        self.meter.begin_epoch()
        actual, worst = centralized_fronthaul(users_per_sbs, cfg)
        self.meter.add("train", actual, worst)
        return _record(t, "train", outcome, r_h, lam, beta, self.meter,
                       critic_loss=critic_loss, actor_grad_norm=actor_gnorm,
                       actor_lr=self.actor_lr.rate(t),
                       critic_lr=self.critic_lr.rate(t),
                       buffer_size=self.buffer.size)

    def eval_epoch(self, env, index=0):
        cfg = self.config
        users_per_sbs = env.state.users.per_sbs_counts()
        _, mapped, _ = self.greedy_joint(env.state)
        slack = storage_slack(mapped, cfg.num_sbs, cfg.cache_capacity)
        outcome = env.step(action_vector_to_matrix(
            mapped, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        self.meter.begin_epoch()
        actual, worst = centralized_fronthaul(users_per_sbs, cfg)
        self.meter.add("eval", actual, worst)
        return _record(index, "eval", outcome,
                       homotopy_reward(outcome.reward, slack, lam), lam, 0.0,
                       self.meter, buffer_size=self.buffer.size)

    def warm_up(self, env, num_experiences=None):
        """Seed the buffer with jointly-optimized decisions before training."""
        cfg = self.config
        if num_experiences is None:
            num_experiences = self.settings.buffer_capacity // 10
        for _ in range(num_experiences):
            stats = bl.RequestStats.from_users(env.state.users,
                                               cfg.num_content)
            decision = bl.co_cu_decide(stats, env.state.cache,
                                       cfg.cache_capacity)
            s_vec = encode_global_state(env.state)
            action = matrix_to_action_vector(decision)
            slack = storage_slack(action, cfg.num_sbs, cfg.cache_capacity)
            outcome = env.step(decision)
            r_h = homotopy_reward(outcome.reward, slack, self.schedule.lam)
            self.buffer.add(s_vec, action, r_h, encode_global_state(env.state))
        return num_experiences

    # -- checkpointing --

    def save(self, path):
        np.savez(path,
                 version=CONTROLLER_CHECKPOINT_VERSION, kind=self.mode,
                 settings=json.dumps(asdict(self.settings)), seed=self.seed,
                 epoch=self.epoch,
                 actor_params=self.pair.actor.params,
                 actor_m=self.pair.actor.adam.m, actor_v=self.pair.actor.adam.v,
                 actor_step=self.pair.actor.adam.step,
                 actor_skipped=self.pair.actor.adam.skipped,
                 critic_params=self.pair.critic.params,
                 critic_m=self.pair.critic.adam.m,
                 critic_v=self.pair.critic.adam.v,
                 critic_step=self.pair.critic.adam.step,
                 critic_skipped=self.pair.critic.adam.skipped,
                 target_actor=self.pair.target_actor_params,
                 target_critic=self.pair.target_critic_params,
                 buf_states=self.buffer.states, buf_actions=self.buffer.actions,
                 buf_rewards=self.buffer.rewards_h,
                 buf_next=self.buffer.next_states,
                 buf_size=self.buffer.size, buf_cursor=self.buffer.cursor,
                 ou_x=self.noise.x, ou_beta=self.noise.beta,
                 lam=self.schedule.lam, lam_applied=self.schedule.applied,
                 ou_rng=rng_state_json(self.ou_rng),
                 sample_rng=rng_state_json(self.sample_rng))

    @classmethod
    def load(cls, path, env_config):
        with np.load(path, allow_pickle=False) as d:
            if int(d["version"]) != CONTROLLER_CHECKPOINT_VERSION:
                raise ValueError("unsupported controller checkpoint version")
            if str(d["kind"]) != cls.mode:
                raise ValueError(f"checkpoint kind {d['kind']} != {cls.mode}")
            settings = LearnerSettings(**_settings_kwargs(str(d["settings"])))
            ctl = cls(env_config, settings, int(d["seed"]))
            ctl.epoch = int(d["epoch"])
            ctl.pair.actor.params[...] = d["actor_params"]
            ctl.pair.actor.adam.m[...] = d["actor_m"]
            ctl.pair.actor.adam.v[...] = d["actor_v"]
            ctl.pair.actor.adam.step = int(d["actor_step"])
            ctl.pair.actor.adam.skipped = int(d["actor_skipped"])
            ctl.pair.critic.params[...] = d["critic_params"]
            ctl.pair.critic.adam.m[...] = d["critic_m"]
            ctl.pair.critic.adam.v[...] = d["critic_v"]
            ctl.pair.critic.adam.step = int(d["critic_step"])
            ctl.pair.critic.adam.skipped = int(d["critic_skipped"])
            ctl.pair.target_actor_params[...] = d["target_actor"]
            ctl.pair.target_critic_params[...] = d["target_critic"]
            ctl.buffer.states[...] = d["buf_states"]
            ctl.buffer.actions[...] = d["buf_actions"]
            ctl.buffer.rewards_h[...] = d["buf_rewards"]
            ctl.buffer.next_states[...] = d["buf_next"]
            ctl.buffer.size = int(d["buf_size"])
            ctl.buffer.cursor = int(d["buf_cursor"])
            ctl.noise.x = d["ou_x"].copy()
            ctl.noise.beta = float(d["ou_beta"])
            ctl.schedule.lam = float(d["lam"])
            ctl.schedule.applied = int(d["lam_applied"])
            ctl.ou_rng = rng_from_state_json(str(d["ou_rng"]))
            ctl.sample_rng = rng_from_state_json(str(d["sample_rng"]))
        return ctl


class PdController:
    """Central critic over (global state, all actions); local actors."""

    mode = "pd"

    def __init__(self, env_config, settings, seed):
        self.config = env_config
        self.settings = settings
        self.seed = int(seed)
        f, b = env_config.num_content, env_config.num_sbs
        self.num_content = f
        self.num_sbs = b
        self.global_dim = global_state_dim(env_config)
        self.local_dim = local_obs_dim(env_config)
        self.joint_action_dim = f * b
        critic_spec = NetSpec(
            layer_sizes=(self.global_dim + self.joint_action_dim,
                         *settings.critic_hidden, 1),
            hidden_activation=settings.hidden_activation, head="linear")
        self.critic = TrainableNet.create(
            critic_spec, np.random.default_rng([self.seed, CRITIC_SEED_SALT, 0]))
        self.target_critic_params = self.critic.params.copy()
        actor_spec = NetSpec(
            layer_sizes=(self.local_dim, *settings.actor_hidden, f),
            hidden_activation=settings.hidden_activation,
            head="softmax_scaled", head_scale=env_config.cache_capacity,
            head_groups=1)
        self.actors = []
        self.target_actor_params = []
        self.noises = []
        self.ou_rngs = []
        for agent in range(b):
            actor = TrainableNet.create(
                actor_spec,
                np.random.default_rng([self.seed, ACTOR_SEED_SALT, agent]))
            self.actors.append(actor)
            self.target_actor_params.append(actor.params.copy())
            self.noises.append(OuNoise(
                dim=f, theta=settings.ou_theta,
                sigma=float(np.sqrt(2.0 * settings.ou_theta)),
                beta=settings.beta_init, beta_decay=settings.beta_decay,
                beta_floor=settings.beta_floor))
            self.ou_rngs.append(
                np.random.default_rng([self.seed, OU_SEED_SALT, agent]))
        self.buffer = ReplayBuffer(settings.buffer_capacity, self.global_dim,
                                   self.joint_action_dim)
        self.sample_rng = np.random.default_rng([self.seed, SAMPLE_SEED_SALT, 0])
        self.schedule = HomotopySchedule.from_lambda_min(
            settings.lambda_min, settings.lambda_steps, settings.lambda_period)
        self.actor_lr, self.critic_lr = _lr_schedules(settings)
        self.meter = FronthaulMeter()
        self.epoch = 0

    def _local_actions(self, state, explore):
        cfg = self.config
        mapped_blocks = []
        exec_blocks = []
        for agent, actor in enumerate(self.actors):
            obs = encode_local_observation(state, agent)
            proto, _ = actor.net.forward(actor.params, obs)
            mapped = map_action(proto)
            mapped_blocks.append(mapped)
            if explore:
                exec_blocks.append(explore_action(
                    mapped, self.noises[agent], self.ou_rngs[agent],
                    cfg.cache_capacity, cfg.num_content))
            else:
                exec_blocks.append(mapped)
        return np.concatenate(mapped_blocks), np.concatenate(exec_blocks)

    def _target_joint_action(self, next_states):
        blocks = []
        for agent, actor in enumerate(self.actors):
            local = local_obs_slice(next_states, agent, self.num_content,
                                    self.num_sbs)
            proto, _ = actor.net.forward(self.target_actor_params[agent], local)
            blocks.append(map_action(proto))
        return np.hstack(blocks)

    def _critic_step(self, batch, lr):
        states, actions, rewards_h, next_states = batch
        a2 = self._target_joint_action(next_states)
        q2, _ = self.critic.net.forward(self.target_critic_params,
                                        np.hstack([next_states, a2]))
        targets = rewards_h + self.settings.gamma * q2[:, 0]
        q, cache = self.critic.net.forward(self.critic.params,
                                           np.hstack([states, actions]))
        err = q[:, 0] - targets
        upstream = (2.0 * err / len(err))[:, None]
        grads, _ = self.critic.net.backward(self.critic.params, cache,
                                            upstream)
        adam_step(self.critic.params, grads, self.critic.adam, lr)
        return float(np.mean(err ** 2))

    def _actor_step(self, agent, batch, lr):
        """Ascend dQ/dA_b through agent b's mapping and actor; the other
        agents' action slots keep their sampled values."""
        states, actions, _, _ = batch
        f = self.num_content
        actor = self.actors[agent]
        local = local_obs_slice(states, agent, f, self.num_sbs)
        proto, actor_cache = actor.net.forward(actor.params, local)
        own = map_action(proto)
        joint = actions.copy()
        joint[:, agent * f:(agent + 1) * f] = own
        _, critic_cache = self.critic.net.forward(
            self.critic.params, np.hstack([states, joint]))
        n = len(states)
        upstream = np.full((n, 1), 1.0 / n)
        _, input_grads = self.critic.net.backward(self.critic.params,
                                                  critic_cache, upstream)
        col = self.global_dim + agent * f
        dq_da = input_grads[:, col:col + f]
        dproto = dq_da * map_action_jacobian(proto)
        grads, _ = actor.net.backward(actor.params, actor_cache, dproto)
        adam_step(actor.params, -grads, actor.adam, lr)
        return float(np.linalg.norm(grads))

    def train_epoch(self, env):
        cfg = self.config
        t = self.epoch
        users_per_sbs = env.state.users.per_sbs_counts()
        s_vec = encode_global_state(env.state)
        beta = self.noises[0].beta
        mapped_joint, exec_joint = self._local_actions(env.state, explore=True)
        slack = storage_slack(mapped_joint, cfg.num_sbs, cfg.cache_capacity)
        outcome = env.step(action_vector_to_matrix(
            exec_joint, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        r_h = homotopy_reward(outcome.reward, slack, lam)
        s2_vec = encode_global_state(env.state)
        self.buffer.add(s_vec, exec_joint, r_h, s2_vec)
        critic_loss = float("nan")
        actor_gnorm = float("nan")
        if self.buffer.size >= self.settings.batch_size:
            batch = self.buffer.sample(self.sample_rng,
                                       self.settings.batch_size)
            critic_loss = self._critic_step(batch, self.critic_lr.rate(t))
            norms = [self._actor_step(agent, batch, self.actor_lr.rate(t))
                     for agent in range(self.num_sbs)]
            actor_gnorm = float(np.linalg.norm(norms))
            soft_update(self.target_critic_params, self.critic.params,
                        self.settings.tau)
            for agent, actor in enumerate(self.actors):
                soft_update(self.target_actor_params[agent], actor.params,
                            self.settings.tau)
        self.schedule.maybe_step(t)
        self.epoch += 1
        self.meter.begin_epoch()
        actual, worst = centralized_fronthaul(users_per_sbs, cfg)
        self.meter.add("train", actual, worst)
        return _record(t, "train", outcome, r_h, lam, beta, self.meter,
                       critic_loss=critic_loss, actor_grad_norm=actor_gnorm,
                       actor_lr=self.actor_lr.rate(t),
                       critic_lr=self.critic_lr.rate(t),
                       buffer_size=self.buffer.size)

    def eval_epoch(self, env, index=0):
        cfg = self.config
        mapped_joint, _ = self._local_actions(env.state, explore=False)
        slack = storage_slack(mapped_joint, cfg.num_sbs, cfg.cache_capacity)
        outcome = env.step(action_vector_to_matrix(
            mapped_joint, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        self.meter.begin_epoch()
        self.meter.add("eval", 0.0, 0.0)  # stations act on local observations
        return _record(index, "eval", outcome,
                       homotopy_reward(outcome.reward, slack, lam), lam, 0.0,
                       self.meter, buffer_size=self.buffer.size)

    def warm_up(self, env, num_experiences=None):
        cfg = self.config
        if num_experiences is None:
            num_experiences = self.settings.buffer_capacity // 10
        for _ in range(num_experiences):
            stats = bl.RequestStats.from_users(env.state.users,
                                               cfg.num_content)
            decision = bl.co_cu_decide(stats, env.state.cache,
                                       cfg.cache_capacity)
            s_vec = encode_global_state(env.state)
            action = matrix_to_action_vector(decision)
            slack = storage_slack(action, cfg.num_sbs, cfg.cache_capacity)
            outcome = env.step(decision)
            r_h = homotopy_reward(outcome.reward, slack, self.schedule.lam)
            self.buffer.add(s_vec, action, r_h, encode_global_state(env.state))
        return num_experiences

    def actor_param_push_dims(self):
        """One-time download of trained actor parameters to the stations."""
        return sum(len(a.params) for a in self.actors)

    def save(self, path):
        arrays = dict(
            version=CONTROLLER_CHECKPOINT_VERSION, kind=self.mode,
            settings=json.dumps(asdict(self.settings)), seed=self.seed,
            epoch=self.epoch,
            critic_params=self.critic.params, critic_m=self.critic.adam.m,
            critic_v=self.critic.adam.v, critic_step=self.critic.adam.step,
            critic_skipped=self.critic.adam.skipped,
            target_critic=self.target_critic_params,
            buf_states=self.buffer.states, buf_actions=self.buffer.actions,
            buf_rewards=self.buffer.rewards_h, buf_next=self.buffer.next_states,
            buf_size=self.buffer.size, buf_cursor=self.buffer.cursor,
            lam=self.schedule.lam, lam_applied=self.schedule.applied,
            sample_rng=rng_state_json(self.sample_rng))
        for agent, actor in enumerate(self.actors):
            arrays[f"actor{agent}_params"] = actor.params
            arrays[f"actor{agent}_m"] = actor.adam.m
            arrays[f"actor{agent}_v"] = actor.adam.v
            arrays[f"actor{agent}_step"] = actor.adam.step
            arrays[f"actor{agent}_skipped"] = actor.adam.skipped
            arrays[f"target_actor{agent}"] = self.target_actor_params[agent]
            arrays[f"ou{agent}_x"] = self.noises[agent].x
            arrays[f"ou{agent}_beta"] = self.noises[agent].beta
            arrays[f"ou{agent}_rng"] = rng_state_json(self.ou_rngs[agent])
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, env_config):
        with np.load(path, allow_pickle=False) as d:
            if int(d["version"]) != CONTROLLER_CHECKPOINT_VERSION:
                raise ValueError("unsupported controller checkpoint version")
            if str(d["kind"]) != cls.mode:
                raise ValueError(f"checkpoint kind {d['kind']} != {cls.mode}")
            settings = LearnerSettings(**_settings_kwargs(str(d["settings"])))
            ctl = cls(env_config, settings, int(d["seed"]))
            ctl.epoch = int(d["epoch"])
            ctl.critic.params[...] = d["critic_params"]
            ctl.critic.adam.m[...] = d["critic_m"]
            ctl.critic.adam.v[...] = d["critic_v"]
            ctl.critic.adam.step = int(d["critic_step"])
            ctl.critic.adam.skipped = int(d["critic_skipped"])
            ctl.target_critic_params[...] = d["target_critic"]
            ctl.buffer.states[...] = d["buf_states"]
            ctl.buffer.actions[...] = d["buf_actions"]
            ctl.buffer.rewards_h[...] = d["buf_rewards"]
            ctl.buffer.next_states[...] = d["buf_next"]
            ctl.buffer.size = int(d["buf_size"])
            ctl.buffer.cursor = int(d["buf_cursor"])
            ctl.schedule.lam = float(d["lam"])
            ctl.schedule.applied = int(d["lam_applied"])
            ctl.sample_rng = rng_from_state_json(str(d["sample_rng"]))
            for agent, actor in enumerate(ctl.actors):
                actor.params[...] = d[f"actor{agent}_params"]
                actor.adam.m[...] = d[f"actor{agent}_m"]
                actor.adam.v[...] = d[f"actor{agent}_v"]
                actor.adam.step = int(d[f"actor{agent}_step"])
                actor.adam.skipped = int(d[f"actor{agent}_skipped"])
                ctl.target_actor_params[agent][...] = d[f"target_actor{agent}"]
                ctl.noises[agent].x = d[f"ou{agent}_x"].copy()
                ctl.noises[agent].beta = float(d[f"ou{agent}_beta"])
                ctl.ou_rngs[agent] = rng_from_state_json(str(d[f"ou{agent}_rng"]))
        return ctl


class FdController:
    """Independent learners; only the penalized reward crosses the fronthaul."""

    mode = "fd"

    def __init__(self, env_config, settings, seed):
        self.config = env_config
        self.settings = settings
        self.seed = int(seed)
        f, b = env_config.num_content, env_config.num_sbs
        self.num_content = f
        self.num_sbs = b
        self.local_dim = local_obs_dim(env_config)
        self.pairs = []
        self.buffers = []
        self.noises = []
        self.ou_rngs = []
        self.sample_rngs = []
        for agent in range(b):
            self.pairs.append(ActorCriticPair.create(
                self.local_dim, f, settings.actor_hidden,
                settings.critic_hidden, env_config.cache_capacity, 1,
                settings.hidden_activation,
                np.random.default_rng([self.seed, ACTOR_SEED_SALT, agent]),
                np.random.default_rng([self.seed, CRITIC_SEED_SALT, agent])))
            self.buffers.append(ReplayBuffer(settings.buffer_capacity,
                                             self.local_dim, f))
            self.noises.append(OuNoise(
                dim=f, theta=settings.ou_theta,
                sigma=float(np.sqrt(2.0 * settings.ou_theta)),
                beta=settings.beta_init, beta_decay=settings.beta_decay,
                beta_floor=settings.beta_floor))
            self.ou_rngs.append(
                np.random.default_rng([self.seed, OU_SEED_SALT, agent]))
            self.sample_rngs.append(
                np.random.default_rng([self.seed, SAMPLE_SEED_SALT, agent]))
        self.schedule = HomotopySchedule.from_lambda_min(
            settings.lambda_min, settings.lambda_steps, settings.lambda_period)
        self.actor_lr, self.critic_lr = _lr_schedules(settings)
        self.meter = FronthaulMeter()
        self.epoch = 0

    def _act(self, state, explore):
        cfg = self.config
        obs = [encode_local_observation(state, agent)
               for agent in range(self.num_sbs)]
        exec_blocks = []
        for agent, pair in enumerate(self.pairs):
            mapped, _ = pair.greedy_action(obs[agent])
            if explore:
                exec_blocks.append(explore_action(
                    mapped, self.noises[agent], self.ou_rngs[agent],
                    cfg.cache_capacity, cfg.num_content))
            else:
                exec_blocks.append(mapped)
        return obs, exec_blocks

    def train_epoch(self, env):
        cfg = self.config
        t = self.epoch
        beta = self.noises[0].beta
        obs, exec_blocks = self._act(env.state, explore=True)
        # per-station slack of the executed action, aggregated by the CP
        slacks = [cfg.cache_capacity - float(np.abs(a).sum())
                  for a in exec_blocks]
        joint = np.concatenate(exec_blocks)
        outcome = env.step(action_vector_to_matrix(
            joint, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        r_h = homotopy_reward(outcome.reward, float(np.sum(slacks)), lam)
        obs2 = [encode_local_observation(env.state, agent)
                for agent in range(self.num_sbs)]
        critic_losses = []
        actor_norms = []
        for agent, pair in enumerate(self.pairs):
            self.buffers[agent].add(obs[agent], exec_blocks[agent], r_h,
                                    obs2[agent])
            if self.buffers[agent].size >= self.settings.batch_size:
                batch = self.buffers[agent].sample(self.sample_rngs[agent],
                                                   self.settings.batch_size)
                critic_losses.append(critic_train_step(
                    pair, batch, self.settings.gamma, self.critic_lr.rate(t)))
                actor_norms.append(actor_train_step(
                    pair, batch, self.actor_lr.rate(t)))
                soft_update(pair.target_critic_params, pair.critic.params,
                            self.settings.tau)
                soft_update(pair.target_actor_params, pair.actor.params,
                            self.settings.tau)
        self.schedule.maybe_step(t)
        self.epoch += 1
        self.meter.begin_epoch()
        self.meter.add("train", 2.0 * self.num_sbs, 2.0 * self.num_sbs)
        return _record(t, "train", outcome, r_h, lam, beta, self.meter,
                       critic_loss=(float(np.mean(critic_losses))
                                    if critic_losses else float("nan")),
                       actor_grad_norm=(float(np.linalg.norm(actor_norms))
                                        if actor_norms else float("nan")),
                       actor_lr=self.actor_lr.rate(t),
                       critic_lr=self.critic_lr.rate(t),
                       buffer_size=self.buffers[0].size)

    def eval_epoch(self, env, index=0):
        cfg = self.config
        _, exec_blocks = self._act(env.state, explore=False)
        slacks = [cfg.cache_capacity - float(np.abs(a).sum())
                  for a in exec_blocks]
        joint = np.concatenate(exec_blocks)
        outcome = env.step(action_vector_to_matrix(
            joint, cfg.num_content, cfg.num_sbs))
        lam = self.schedule.lam
        self.meter.begin_epoch()
        self.meter.add("eval", 0.0, 0.0)
        return _record(index, "eval", outcome,
                       homotopy_reward(outcome.reward, float(np.sum(slacks)),
                                       lam),
                       lam, 0.0, self.meter, buffer_size=self.buffers[0].size)

    def warm_up(self, env, num_experiences=None):
        cfg = self.config
        f = cfg.num_content
        if num_experiences is None:
            num_experiences = self.settings.buffer_capacity // 10
        for _ in range(num_experiences):
            stats = bl.RequestStats.from_users(env.state.users, f)
            decision = bl.co_cu_decide(stats, env.state.cache,
                                       cfg.cache_capacity)
            obs = [encode_local_observation(env.state, agent)
                   for agent in range(self.num_sbs)]
            blocks = [decision[:, agent] for agent in range(self.num_sbs)]
            slack = sum(cfg.cache_capacity - float(np.abs(a).sum())
                        for a in blocks)
            outcome = env.step(decision)
            r_h = homotopy_reward(outcome.reward, slack, self.schedule.lam)
            for agent in range(self.num_sbs):
                self.buffers[agent].add(
                    obs[agent], blocks[agent], r_h,
                    encode_local_observation(env.state, agent))
        return num_experiences

    def save(self, path):
        arrays = dict(
            version=CONTROLLER_CHECKPOINT_VERSION, kind=self.mode,
            settings=json.dumps(asdict(self.settings)), seed=self.seed,
            epoch=self.epoch,
            lam=self.schedule.lam, lam_applied=self.schedule.applied)
        for agent, pair in enumerate(self.pairs):
            buf = self.buffers[agent]
            arrays.update({
                f"a{agent}_actor_params": pair.actor.params,
                f"a{agent}_actor_m": pair.actor.adam.m,
                f"a{agent}_actor_v": pair.actor.adam.v,
                f"a{agent}_actor_step": pair.actor.adam.step,
                f"a{agent}_actor_skipped": pair.actor.adam.skipped,
                f"a{agent}_critic_params": pair.critic.params,
                f"a{agent}_critic_m": pair.critic.adam.m,
                f"a{agent}_critic_v": pair.critic.adam.v,
                f"a{agent}_critic_step": pair.critic.adam.step,
                f"a{agent}_critic_skipped": pair.critic.adam.skipped,
                f"a{agent}_target_actor": pair.target_actor_params,
                f"a{agent}_target_critic": pair.target_critic_params,
                f"a{agent}_buf_states": buf.states,
                f"a{agent}_buf_actions": buf.actions,
                f"a{agent}_buf_rewards": buf.rewards_h,
                f"a{agent}_buf_next": buf.next_states,
                f"a{agent}_buf_size": buf.size,
                f"a{agent}_buf_cursor": buf.cursor,
                f"a{agent}_ou_x": self.noises[agent].x,
                f"a{agent}_ou_beta": self.noises[agent].beta,
                f"a{agent}_ou_rng": rng_state_json(self.ou_rngs[agent]),
                f"a{agent}_sample_rng": rng_state_json(self.sample_rngs[agent]),
            })
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, env_config):
        with np.load(path, allow_pickle=False) as d:
            if int(d["version"]) != CONTROLLER_CHECKPOINT_VERSION:
                raise ValueError("unsupported controller checkpoint version")
            if str(d["kind"]) != cls.mode:
                raise ValueError(f"checkpoint kind {d['kind']} != {cls.mode}")
            settings = LearnerSettings(**_settings_kwargs(str(d["settings"])))
            ctl = cls(env_config, settings, int(d["seed"]))
            ctl.epoch = int(d["epoch"])
            ctl.schedule.lam = float(d["lam"])
            ctl.schedule.applied = int(d["lam_applied"])
            for agent, pair in enumerate(ctl.pairs):
                buf = ctl.buffers[agent]
                pair.actor.params[...] = d[f"a{agent}_actor_params"]
                pair.actor.adam.m[...] = d[f"a{agent}_actor_m"]
                pair.actor.adam.v[...] = d[f"a{agent}_actor_v"]
                pair.actor.adam.step = int(d[f"a{agent}_actor_step"])
                pair.actor.adam.skipped = int(d[f"a{agent}_actor_skipped"])
                pair.critic.params[...] = d[f"a{agent}_critic_params"]
                pair.critic.adam.m[...] = d[f"a{agent}_critic_m"]
                pair.critic.adam.v[...] = d[f"a{agent}_critic_v"]
                pair.critic.adam.step = int(d[f"a{agent}_critic_step"])
                pair.critic.adam.skipped = int(d[f"a{agent}_critic_skipped"])
                pair.target_actor_params[...] = d[f"a{agent}_target_actor"]
                pair.target_critic_params[...] = d[f"a{agent}_target_critic"]
                buf.states[...] = d[f"a{agent}_buf_states"]
                buf.actions[...] = d[f"a{agent}_buf_actions"]
                buf.rewards_h[...] = d[f"a{agent}_buf_rewards"]
                buf.next_states[...] = d[f"a{agent}_buf_next"]
                buf.size = int(d[f"a{agent}_buf_size"])
                buf.cursor = int(d[f"a{agent}_buf_cursor"])
                ctl.noises[agent].x = d[f"a{agent}_ou_x"].copy()
                ctl.noises[agent].beta = float(d[f"a{agent}_ou_beta"])
                ctl.ou_rngs[agent] = rng_from_state_json(
                    str(d[f"a{agent}_ou_rng"]))
                ctl.sample_rngs[agent] = rng_from_state_json(
                    str(d[f"a{agent}_sample_rng"]))
        return ctl


class BaselineController:
    """CO-CU / LO-CU / RCU wrapped in the controller epoch interface."""

    def __init__(self, name, env_config, seed):
        if name not in ("cocu", "locu", "rcu"):
            raise ValueError(f"unknown baseline {name!r}")
        self.mode = name
        self.config = env_config
        self.seed = int(seed)
        self.rng = np.random.default_rng([self.seed, BASELINE_SEED_SALT])
        self.meter = FronthaulMeter()
        self.epoch = 0

    def decide(self, state):
        cfg = self.config
        if self.mode == "rcu":
            return bl.rcu_decide(cfg.num_content, cfg.num_sbs,
                                 cfg.cache_capacity, self.rng)
        stats = bl.RequestStats.from_users(state.users, cfg.num_content)
        if self.mode == "cocu":
            return bl.co_cu_decide(stats, state.cache, cfg.cache_capacity)
        decision = np.zeros((cfg.num_content, cfg.num_sbs))
        for b in range(cfg.num_sbs):
            decision[:, b] = bl.lo_cu_decide(stats.counts[:, b],
                                             state.cache[:, b],
                                             cfg.cache_capacity)
        return decision

    def _epoch(self, env, phase, index):
        cfg = self.config
        users_per_sbs = env.state.users.per_sbs_counts()
        outcome = env.step(self.decide(env.state))
        self.meter.begin_epoch()
        if self.mode == "cocu":
            actual, worst = centralized_fronthaul(users_per_sbs, cfg)
        else:
            actual = worst = 0.0
        self.meter.add(phase, actual, worst)
        return _record(index, phase, outcome, outcome.reward, 0.0, 0.0,
                       self.meter)

    def train_epoch(self, env):
        rec = self._epoch(env, "train", self.epoch)
        self.epoch += 1
        return rec

    def eval_epoch(self, env, index=0):
        return self._epoch(env, "eval", index)


def _record(epoch, phase, outcome, r_h, lam, beta, meter, **extra):
    rec = {
        "epoch": epoch,
        "phase": phase,
        "reward": outcome.reward,
        "homotopy_reward": r_h,
        "lam": lam,
        "beta": beta,
        "traffic_cost": outcome.traffic_cost,
        "update_cost": outcome.update_cost,
        "miss_cost": outcome.miss_cost,
        "num_users": outcome.num_users,
        "fronthaul_actual": meter.epoch_actual,
        "fronthaul_worst": meter.epoch_worst,
    }
    rec.update(extra)
    return rec


def _settings_kwargs(settings_json):
    kwargs = json.loads(settings_json)
    kwargs["actor_hidden"] = tuple(kwargs["actor_hidden"])
    kwargs["critic_hidden"] = tuple(kwargs["critic_hidden"])
    return kwargs


def make_controller(mode, env_config, settings, seed):
    if mode == "centralized":
        return CentralizedController(env_config, settings, seed)
    if mode == "pd":
        return PdController(env_config, settings, seed)
    if mode == "fd":
        return FdController(env_config, settings, seed)
    if mode in ("cocu", "locu", "rcu"):
        return BaselineController(mode, env_config, seed)
    raise ValueError(f"unknown mode {mode!r}")


def evaluate_policy(controller, env, num_epochs):
    """Greedy rollout; aggregates reward/traffic statistics and meter totals."""
    records = [controller.eval_epoch(env, index=i) for i in range(num_epochs)]
    rewards = np.array([r["reward"] for r in records])
    return {
        "num_epochs": num_epochs,
        "mean_reward": float(rewards.mean()) if num_epochs else float("nan"),
        "reward_std": float(rewards.std()) if num_epochs else float("nan"),
        "mean_traffic": float(-rewards.mean()) if num_epochs else float("nan"),
        "mean_update_cost": float(np.mean([r["update_cost"] for r in records]))
        if num_epochs else float("nan"),
        "mean_miss_cost": float(np.mean([r["miss_cost"] for r in records]))
        if num_epochs else float("nan"),
        "fronthaul_eval_actual": controller.meter.total_eval_actual,
        "fronthaul_eval_worst": controller.meter.total_eval_worst,
        "records": records,
    }
