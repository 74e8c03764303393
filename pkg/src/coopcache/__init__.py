"""Cooperative coded caching at small-cell networks: a seeded network
simulator, homotopy-penalized DDPG learners at three control levels, and
optimization/random baselines."""

__version__ = "0.1.0"

from .env import (InfeasibleActionError, NetworkConfig, PopularityModel,
                  SmallCellEnv, StepOutcome, UserBatch, compute_reward,
                  compute_traffic_cost, encode_global_state,
                  encode_local_observation, evolve_popularity, place_sbs,
                  sample_users)
from .nets import (AdamState, DenseNet, LrSchedule, NetSpec, adam_step,
                   soft_update, softmax_scaled_head)
from .ddpg import (ActorCriticPair, HomotopySchedule, OuNoise, ReplayBuffer,
                   explore_action, homotopy_reward, map_action,
                   map_action_jacobian, storage_slack)
from .controllers import (BaselineController, CentralizedController,
                          FdController, FronthaulMeter, LearnerSettings,
                          PdController, evaluate_policy, make_controller)
from .baselines import (RequestStats, TinyMdp, brute_force_oracle,
                        co_cu_decide, estimate_local_popularity, lo_cu_decide,
                        rcu_decide)
from .experiment import (PRESETS, ExperimentConfig, compare_runs,
                         export_learning_curve, load_config, run_experiment)

__all__ = [name for name in dir() if not name.startswith("_")]
