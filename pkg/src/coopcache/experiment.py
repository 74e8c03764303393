"""
Declarative experiment runner: presets, training/evaluation loops, metrics
files, learning-curve export, and run comparison.

A run is fully determined by (config, seed): metrics files are byte-identical
across repeated executions.
"""

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .controllers import LearnerSettings, make_controller
from .env import NetworkConfig, SmallCellEnv

EVAL_ENV_SALT = 777

METRICS_COLUMNS = ("epoch", "phase", "reward", "homotopy_reward", "lam",
                   "beta", "update_cost", "miss_cost", "num_users",
                   "fronthaul_actual", "fronthaul_worst", "reward_moving_avg")

LEARNER_MODES = ("centralized", "pd", "fd")
BASELINE_MODES = ("cocu", "locu", "rcu")

# aliases resolve to (controller kind, forced lambda_min or None)
MODE_ALIASES = {
    "centralized": ("centralized", None),
    "c-hddpg": ("centralized", None),
    "plain-ddpg": ("centralized", 0.0),
    "c-ddpg": ("centralized", 0.0),
    "pd": ("pd", None),
    "partially-decentralized": ("pd", None),
    "pd-hddpg": ("pd", None),
    "pd-ddpg": ("pd", 0.0),
    "fd": ("fd", None),
    "fully-decentralized": ("fd", None),
    "fd-hddpg": ("fd", None),
    "fd-ddpg": ("fd", 0.0),
    "cocu": ("cocu", None),
    "locu": ("locu", None),
    "rcu": ("rcu", None),
}


@dataclass(frozen=True)
class ExperimentConfig:
    # network
    area_side_m: float = 1000.0
    num_sbs: int = 4
    comm_radius_m: float = 500.0
    max_users_per_sbs: int = 100
    ppp_density: float = 9.5e-5
    num_content: int = 20
    cache_capacity: float = 4.0
    content_size: float = 1.0
    skew_choices: tuple = (0.5, 1.0, 1.5, 2.0)
    shuffle_period: int | None = 500
    # control mode
    mode: str = "centralized"
    # learner
    actor_hidden: tuple = (256, 128, 64)
    critic_hidden: tuple = (512, 512, 512)
    hidden_activation: str = "relu"
    actor_lr: float = 0.01
    critic_lr: float = 0.001
    lr_decay_power: float = 0.9
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
    warm_up: bool = False
    # run
    total_epochs: int = 100_000
    eval_epochs: int = 10_000
    moving_avg_window: int = 5000
    seed: int = 0
    out_dir: str = "runs/default"


PRESETS = {
    "paper-default": ExperimentConfig(),
    # desk-scale: ~10 users, fixed popularity, small nets, minutes not
    # hours; discount, rates, and exploration decay re-scaled to the short
    # horizon (the full-scale values need ~10x the epochs to converge)
    "tiny": ExperimentConfig(
        area_side_m=1000.0, num_sbs=2, comm_radius_m=500.0,
        max_users_per_sbs=10, ppp_density=1e-5, num_content=5,
        cache_capacity=2.0, skew_choices=(1.0,), shuffle_period=None,
        actor_hidden=(64, 32), critic_hidden=(64, 64),
        actor_lr=0.001, critic_lr=0.001, gamma=0.9, beta_decay=0.999,
        tau=0.005, total_epochs=20_000, eval_epochs=2000,
        moving_avg_window=2000, out_dir="runs/tiny"),
}

_VALIDATORS = {
    "area_side_m": lambda v: v > 0,
    "num_sbs": lambda v: v >= 1,
    "comm_radius_m": lambda v: v > 0,
    "max_users_per_sbs": lambda v: v >= 1,
    "ppp_density": lambda v: v >= 0,
    "num_content": lambda v: v >= 1,
    "content_size": lambda v: v > 0,
    "mode": lambda v: v in MODE_ALIASES,
    "hidden_activation": lambda v: v in ("relu", "tanh"),
    "actor_lr": lambda v: v > 0,
    "critic_lr": lambda v: v > 0,
    "lr_decay_power": lambda v: v >= 0,
    "tau": lambda v: 0 <= v <= 1,
    "gamma": lambda v: 0 <= v < 1,
    "batch_size": lambda v: v >= 1,
    "buffer_capacity": lambda v: v >= 1,
    "lambda_min": lambda v: v <= 0,
    "lambda_steps": lambda v: v >= 1,
    "lambda_period": lambda v: v >= 1,
    "beta_init": lambda v: v >= 0,
    "beta_decay": lambda v: 0 < v <= 1,
    "beta_floor": lambda v: v >= 0,
    "ou_theta": lambda v: 0 < v < 2,
    "total_epochs": lambda v: v >= 1,
    "eval_epochs": lambda v: v >= 0,
    "moving_avg_window": lambda v: v >= 1,
    "seed": lambda v: v >= 0,
}

_TUPLE_KEYS = ("skew_choices", "actor_hidden", "critic_hidden")


def validate_config(config):
    if not 0 < config.cache_capacity <= config.num_content:
        raise ValueError("cache_capacity: must satisfy 0 < value <= num_content")
    for key, ok in _VALIDATORS.items():
        if not ok(getattr(config, key)):
            raise ValueError(f"{key}: value {getattr(config, key)!r} out of range")
    if config.shuffle_period is not None and config.shuffle_period < 1:
        raise ValueError("shuffle_period: must be >= 1 or null")
    if not config.skew_choices:
        raise ValueError("skew_choices: must be non-empty")
    if config.batch_size > config.buffer_capacity:
        raise ValueError("batch_size: exceeds buffer_capacity")
    return config


def load_config(path, preset="paper-default"):
    """Parse a JSON config; absent keys fall back to the preset, unknown
    keys are rejected by name."""
    base = PRESETS[preset]
    text = Path(path).read_text().strip()
    overrides = json.loads(text) if text else {}
    if not isinstance(overrides, dict):
        raise ValueError("config file must contain a JSON object")
    return config_from_dict(overrides, base=base)


def config_from_dict(overrides, base=None):
    base = base if base is not None else PRESETS["paper-default"]
    known = set(asdict(base))
    fixed = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValueError(f"unknown config key: {key}")
        if key in _TUPLE_KEYS:
            value = tuple(value)
        fixed[key] = value
    return validate_config(replace(base, **fixed))


def resolve_mode(config):
    kind, forced_lambda = MODE_ALIASES[config.mode]
    return kind, forced_lambda


def learner_settings(config):
    kind, forced_lambda = resolve_mode(config)
    lam_min = config.lambda_min if forced_lambda is None else forced_lambda
    return LearnerSettings(
        actor_hidden=tuple(config.actor_hidden),
        critic_hidden=tuple(config.critic_hidden),
        hidden_activation=config.hidden_activation,
        actor_lr=config.actor_lr, critic_lr=config.critic_lr,
        lr_decay_power=config.lr_decay_power, lr_horizon=config.total_epochs,
        tau=config.tau, gamma=config.gamma, batch_size=config.batch_size,
        buffer_capacity=config.buffer_capacity, lambda_min=lam_min,
        lambda_steps=config.lambda_steps, lambda_period=config.lambda_period,
        beta_init=config.beta_init, beta_decay=config.beta_decay,
        beta_floor=config.beta_floor, ou_theta=config.ou_theta)


def network_config(config):
    return NetworkConfig(
        area_side_m=config.area_side_m, num_sbs=config.num_sbs,
        comm_radius_m=config.comm_radius_m,
        max_users_per_sbs=config.max_users_per_sbs,
        ppp_density=config.ppp_density, num_content=config.num_content,
        cache_capacity=config.cache_capacity,
        content_size=config.content_size)


def make_env(config, seed, popularity_seed=None):
    """Build the simulator; ``popularity_seed`` reproduces another run's
    initial popularity while drawing an independent user stream."""
    popularity = None
    if popularity_seed is not None:
        from .env import PopularityModel, _epoch_rng
        popularity = PopularityModel.random(
            config.num_content, _epoch_rng(popularity_seed, 0, 0),
            skew_choices=config.skew_choices,
            shuffle_period=config.shuffle_period)
    return SmallCellEnv(network_config(config), seed=seed,
                        popularity=popularity,
                        skew_choices=config.skew_choices,
                        shuffle_period=config.shuffle_period)


def derive_seed(seed, salt):
    seq = np.random.SeedSequence([int(seed), int(salt)])
    return int(seq.generate_state(1, np.uint64)[0])


def build_controller(config, seed=None):
    kind, _ = resolve_mode(config)
    seed = config.seed if seed is None else seed
    if kind in BASELINE_MODES:
        return make_controller(kind, network_config(config), None, seed)
    return make_controller(kind, network_config(config),
                           learner_settings(config), seed)


def moving_average(values, window):
    """Trailing mean over ``window`` entries; shorter prefixes average what
    exists so far."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return values
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def moving_std(values, window):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return values
    mean = moving_average(values, window)
    mean_sq = moving_average(values ** 2, window)
    var = np.maximum(mean_sq - mean ** 2, 0.0)
    return np.sqrt(var)


def run_experiment(config, progress=None):
    """Train (or roll out a baseline), then run the evaluation schedule.

    Writes metrics.csv, manifest.json and, for learner modes, checkpoint.npz
    under ``config.out_dir``; returns a summary dict.
    """
    validate_config(config)
    kind, _ = resolve_mode(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    controller = build_controller(config)
    env = make_env(config, config.seed)
    warmed = 0
    if config.warm_up and kind in LEARNER_MODES:
        warmed = controller.warm_up(env)
    train_records = []
    for t in range(config.total_epochs):
        train_records.append(controller.train_epoch(env))
        if progress and (t + 1) % progress == 0:
            print(f"epoch {t + 1}/{config.total_epochs} "
                  f"reward={train_records[-1]['reward']:.4f}")
    # evaluation continues the same running network with learning and
    # exploration switched off (greedy policy on fresh arrivals)
    eval_records = []
    for i in range(config.eval_epochs):
        eval_records.append(controller.eval_epoch(env, index=i))
    metrics_path = out_dir / "metrics.csv"
    write_metrics(metrics_path, train_records, eval_records,
                  config.moving_avg_window)
    checkpoint_path = None
    if kind in LEARNER_MODES:
        checkpoint_path = out_dir / "checkpoint.npz"
        controller.save(checkpoint_path)
    manifest = {
        "config": _jsonable(asdict(config)),
        "resolved_mode": kind,
        "seed": config.seed,
        "warmup_experiences": warmed,
        "metrics": metrics_path.name,
        "checkpoint": checkpoint_path.name if checkpoint_path else None,
        "package": "coopcache 0.1.0",
    }
    if kind == "pd":
        # one-time push of trained actor parameters to the stations; not
        # part of the per-epoch fronthaul meter
        manifest["actor_param_push_dims"] = controller.actor_param_push_dims()
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True)
                             + "\n")
    return {
        "metrics_path": metrics_path,
        "manifest_path": manifest_path,
        "checkpoint_path": checkpoint_path,
        "train_records": train_records,
        "eval_records": eval_records,
        "controller": controller,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics(path, train_records, eval_records, window):
    rows = []
    for phase_records in (train_records, eval_records):
        if not phase_records:
            continue
        ma = moving_average([r["reward"] for r in phase_records], window)
        for rec, avg in zip(phase_records, ma):
            rows.append((rec, avg))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for rec, avg in rows:
            writer.writerow([
                _fmt(rec["epoch"]), rec["phase"], _fmt(rec["reward"]),
                _fmt(rec["homotopy_reward"]), _fmt(rec["lam"]),
                _fmt(rec["beta"]), _fmt(rec["update_cost"]),
                _fmt(rec["miss_cost"]), _fmt(rec["num_users"]),
                _fmt(rec["fronthaul_actual"]), _fmt(rec["fronthaul_worst"]),
                _fmt(avg)])


def read_metrics(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            parsed = {"phase": row["phase"]}
            for key in METRICS_COLUMNS:
                if key == "phase":
                    continue
                parsed[key] = float(row[key])
            rows.append(parsed)
    if not rows:
        raise ValueError(f"metrics file {path} is empty")
    return rows


def export_learning_curve(metrics_path, window, out_path):
    """(epoch, trailing mean reward, trailing reward std) for train rows."""
    rows = [r for r in read_metrics(metrics_path) if r["phase"] == "train"]
    if not rows:
        raise ValueError("no training rows to export")
    rewards = [r["reward"] for r in rows]
    ma = moving_average(rewards, window)
    std = moving_std(rewards, window)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "reward_moving_avg", "reward_moving_std"))
        for row, m, s in zip(rows, ma, std):
            writer.writerow([_fmt(int(row["epoch"])), _fmt(m), _fmt(s)])
    return out_path


def compare_runs(metrics_paths):
    """Mean evaluation traffic per run plus pairwise percentage differences."""
    if len(metrics_paths) < 2:
        raise ValueError("need at least two runs to compare")
    runs = []
    for path in metrics_paths:
        eval_rows = [r for r in read_metrics(path) if r["phase"] == "eval"]
        if not eval_rows:
            raise ValueError(f"{path}: no evaluation rows")
        runs.append({
            "path": str(path),
            "num_eval_epochs": len(eval_rows),
            "mean_traffic": float(np.mean([-r["reward"] for r in eval_rows])),
        })
    schedules = {r["num_eval_epochs"] for r in runs}
    if len(schedules) != 1:
        raise ValueError(f"evaluation schedules differ across runs: {schedules}")
    pairwise = []
    for i, a in enumerate(runs):
        for j, b in enumerate(runs):
            if i == j:
                continue
            if b["mean_traffic"] == 0.0:
                pct = 0.0 if a["mean_traffic"] == 0.0 else float("inf")
            else:
                pct = 100.0 * (a["mean_traffic"] - b["mean_traffic"]) \
                    / b["mean_traffic"]
            pairwise.append({"run_a": a["path"], "run_b": b["path"],
                             "traffic_diff_pct": round(pct, 2)})
    return {"runs": runs, "pairwise": pairwise}


def format_comparison(table):
    lines = ["run,mean_eval_traffic"]
    for run in table["runs"]:
        lines.append(f"{run['path']},{run['mean_traffic']!r}")
    lines.append("run_a,run_b,traffic_diff_pct")
    for pair in table["pairwise"]:
        lines.append(f"{pair['run_a']},{pair['run_b']},"
                     f"{pair['traffic_diff_pct']:.2f}")
    return "\n".join(lines)
