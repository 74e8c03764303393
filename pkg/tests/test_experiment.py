import json
from dataclasses import replace

import numpy as np
import pytest

from coopcache import cli
from coopcache import experiment as xp


def tiny_run_config(tmp_path, **overrides):
    base = dict(total_epochs=150, eval_epochs=20, seed=3,
                out_dir=str(tmp_path / "run"))
    base.update(overrides)
    return replace(xp.PRESETS["tiny"], **base)


# ------------------------------------------------------------------ config

def test_empty_config_file_gives_full_preset(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    assert xp.load_config(path) == xp.PRESETS["paper-default"]


def test_config_override_single_key(tmp_path):
    path = tmp_path / "f50.json"
    path.write_text(json.dumps({"num_content": 50, "cache_capacity": 5.0}))
    config = xp.load_config(path)
    assert config.num_content == 50
    assert config.cache_capacity == 5.0
    assert config.num_sbs == xp.PRESETS["paper-default"].num_sbs


def test_config_rejects_negative_capacity_by_name(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"cache_capacity": -2.0}))
    with pytest.raises(ValueError, match="cache_capacity"):
        xp.load_config(path)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"learning_rate": 0.1}))
    with pytest.raises(ValueError, match="learning_rate"):
        xp.load_config(path)


def test_paper_default_preset_values():
    c = xp.PRESETS["paper-default"]
    assert (c.num_sbs, c.comm_radius_m, c.max_users_per_sbs) == (4, 500.0, 100)
    assert c.ppp_density == 9.5e-5
    assert (c.num_content, c.cache_capacity) == (20, 4.0)  # L/F = 0.2
    assert c.skew_choices == (0.5, 1.0, 1.5, 2.0)
    assert c.critic_hidden == (512, 512, 512)
    assert c.actor_hidden == (256, 128, 64)
    assert (c.actor_lr, c.critic_lr, c.lr_decay_power) == (0.01, 0.001, 0.9)
    assert (c.batch_size, c.buffer_capacity) == (100, 5000)
    assert (c.tau, c.gamma) == (0.001, 0.99)
    assert (c.beta_init, c.beta_decay, c.beta_floor) == (0.9, 0.995, 1e-4)
    assert (c.lambda_min, c.lambda_steps, c.lambda_period) == (-0.005, 10, 1000)
    assert c.lambda_min / c.lambda_steps == -0.0005  # delta = -0.1 * lambda_min
    assert c.moving_avg_window == 5000
    assert c.eval_epochs == 10_000


def test_tiny_preset_is_desk_scale():
    c = xp.PRESETS["tiny"]
    assert c.num_sbs == 2 and c.num_content == 5
    assert c.cache_capacity / c.num_content == pytest.approx(0.4)
    assert c.shuffle_period is None
    assert c.total_epochs == 20_000


# ------------------------------------------------------------------ runs

def test_rcu_run_writes_rows_and_no_checkpoint(tmp_path):
    config = tiny_run_config(tmp_path, mode="rcu", total_epochs=100,
                             eval_epochs=0)
    result = xp.run_experiment(config)
    assert result["checkpoint_path"] is None
    rows = xp.read_metrics(result["metrics_path"])
    assert len(rows) == 100
    assert all(r["phase"] == "train" for r in rows)
    manifest = json.loads(result["manifest_path"].read_text())
    assert manifest["checkpoint"] is None
    assert manifest["resolved_mode"] == "rcu"


def test_same_config_same_bytes(tmp_path):
    c1 = tiny_run_config(tmp_path / "a")
    c2 = tiny_run_config(tmp_path / "b")
    r1, r2 = xp.run_experiment(c1), xp.run_experiment(c2)
    assert r1["metrics_path"].read_bytes() == r2["metrics_path"].read_bytes()
    m1 = json.loads(r1["manifest_path"].read_text())
    m2 = json.loads(r2["manifest_path"].read_text())
    m1["config"].pop("out_dir"), m2["config"].pop("out_dir")
    assert m1 == m2


def test_plain_ddpg_alias_equals_zero_lambda_run(tmp_path):
    explicit = tiny_run_config(tmp_path / "explicit", mode="centralized",
                               lambda_min=0.0)
    alias = tiny_run_config(tmp_path / "alias", mode="plain-ddpg")
    r1, r2 = xp.run_experiment(explicit), xp.run_experiment(alias)
    assert r1["metrics_path"].read_bytes() == r2["metrics_path"].read_bytes()


def test_learner_run_writes_checkpoint(tmp_path):
    config = tiny_run_config(tmp_path, mode="fd", total_epochs=60,
                             eval_epochs=10)
    result = xp.run_experiment(config)
    assert result["checkpoint_path"].exists()


def test_pd_manifest_reports_parameter_push(tmp_path):
    config = tiny_run_config(tmp_path, mode="pd", total_epochs=40,
                             eval_epochs=5)
    result = xp.run_experiment(config)
    manifest = json.loads(result["manifest_path"].read_text())
    ctl = result["controller"]
    assert manifest["actor_param_push_dims"] == \
        sum(len(a.params) for a in ctl.actors)


def test_warm_up_prefills_buffer(tmp_path):
    config = tiny_run_config(tmp_path, total_epochs=10, eval_epochs=0,
                             warm_up=True, buffer_capacity=100)
    result = xp.run_experiment(config)
    manifest = json.loads(result["manifest_path"].read_text())
    assert manifest["warmup_experiences"] == 10  # 10% of capacity
    assert result["controller"].buffer.size == 20  # warmup + train epochs


def test_moving_average_column_is_recomputable(tmp_path):
    config = tiny_run_config(tmp_path, total_epochs=80, eval_epochs=0)
    result = xp.run_experiment(config)
    rows = xp.read_metrics(result["metrics_path"])
    rewards = [r["reward"] for r in rows]
    recomputed = xp.moving_average(rewards, config.moving_avg_window)
    stored = [r["reward_moving_avg"] for r in rows]
    assert np.array_equal(recomputed, stored)


# ------------------------------------------------------------------ curves

def test_moving_average_prefix_rule():
    assert np.array_equal(xp.moving_average([0.0, -1.0, 0.0, -1.0], 2),
                          [0.0, -0.5, -0.5, -0.5])
    assert np.array_equal(xp.moving_average([-1.0, -1.0], 10), [-1.0, -1.0])


def test_export_curve_constant_reward(tmp_path):
    config = tiny_run_config(tmp_path, mode="rcu", total_epochs=30,
                             eval_epochs=0, ppp_density=0.0, seed=1)
    # no users and random full-budget updates: reward is pure update cost
    result = xp.run_experiment(config)
    out = tmp_path / "curve.csv"
    xp.export_learning_curve(result["metrics_path"], window=5, out_path=out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "epoch,reward_moving_avg,reward_moving_std"
    assert len(lines) == 31


def test_export_curve_hand_values(tmp_path):
    rows_train = [
        {"epoch": i, "phase": "train", "reward": r, "homotopy_reward": r,
         "lam": 0.0, "beta": 0.0, "update_cost": 0.0, "miss_cost": 0.0,
         "num_users": 1, "fronthaul_actual": 0.0, "fronthaul_worst": 0.0}
        for i, r in enumerate([0.0, -1.0, 0.0, -1.0])
    ]
    path = tmp_path / "metrics.csv"
    xp.write_metrics(path, rows_train, [], window=2)
    out = tmp_path / "curve.csv"
    xp.export_learning_curve(path, window=2, out_path=out)
    lines = out.read_text().strip().splitlines()[1:]
    avgs = [float(line.split(",")[1]) for line in lines]
    assert avgs == [0.0, -0.5, -0.5, -0.5]
    stds = [float(line.split(",")[2]) for line in lines]
    assert stds == [0.0, 0.5, 0.5, 0.5]


def test_export_curve_empty_metrics_errors(tmp_path):
    path = tmp_path / "metrics.csv"
    xp.write_metrics(path, [], [], window=2)
    with pytest.raises(ValueError):
        xp.export_learning_curve(path, window=2, out_path=tmp_path / "c.csv")


# ------------------------------------------------------------------ compare

def test_compare_run_against_itself_is_zero(tmp_path):
    config = tiny_run_config(tmp_path, mode="rcu", total_epochs=20,
                             eval_epochs=30)
    result = xp.run_experiment(config)
    table = xp.compare_runs([result["metrics_path"],
                             result["metrics_path"]])
    assert all(p["traffic_diff_pct"] == 0.0 for p in table["pairwise"])


def test_compare_degenerate_popularity_cocu_beats_rcu(tmp_path):
    # a single ever-popular item: the optimizer caches it once and stops
    # paying, the random updater keeps churning
    common = dict(total_epochs=5, eval_epochs=150, seed=12,
                  skew_choices=(float("inf"),))
    cfg_co = tiny_run_config(tmp_path / "co", mode="cocu", **common)
    cfg_rcu = tiny_run_config(tmp_path / "rcu", mode="rcu", **common)
    r_co = xp.run_experiment(cfg_co)
    r_rcu = xp.run_experiment(cfg_rcu)
    table = xp.compare_runs([r_co["metrics_path"], r_rcu["metrics_path"]])
    traffic = {run["path"]: run["mean_traffic"] for run in table["runs"]}
    assert traffic[str(r_co["metrics_path"])] < \
        traffic[str(r_rcu["metrics_path"])]


def test_compare_requires_matching_schedules(tmp_path):
    c1 = tiny_run_config(tmp_path / "a", mode="rcu", total_epochs=10,
                         eval_epochs=20)
    c2 = tiny_run_config(tmp_path / "b", mode="rcu", total_epochs=10,
                         eval_epochs=25)
    r1, r2 = xp.run_experiment(c1), xp.run_experiment(c2)
    with pytest.raises(ValueError, match="schedules"):
        xp.compare_runs([r1["metrics_path"], r2["metrics_path"]])


def test_compare_percentages_have_two_decimals(tmp_path):
    c1 = tiny_run_config(tmp_path / "a", mode="rcu", total_epochs=5,
                         eval_epochs=40, seed=1)
    c2 = tiny_run_config(tmp_path / "b", mode="locu", total_epochs=5,
                         eval_epochs=40, seed=1)
    r1, r2 = xp.run_experiment(c1), xp.run_experiment(c2)
    table = xp.compare_runs([r1["metrics_path"], r2["metrics_path"]])
    for pair in table["pairwise"]:
        assert pair["traffic_diff_pct"] == round(pair["traffic_diff_pct"], 2)
    text = xp.format_comparison(table)
    assert "traffic_diff_pct" in text


# ------------------------------------------------------------------ cli

def test_cli_train_eval_roundtrip(tmp_path):
    out = tmp_path / "run"
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "mode": "fd", "total_epochs": 60, "eval_epochs": 10,
        "out_dir": str(out)}))
    assert cli.main(["train", "--preset", "tiny", "--config", str(cfg_path),
                     "--seed", "4"]) == 0
    assert (out / "metrics.csv").exists()
    assert (out / "checkpoint.npz").exists()
    assert cli.main(["eval", "--preset", "tiny", "--config", str(cfg_path),
                     "--seed", "4"]) == 0
    assert (out / "eval_metrics.csv").exists()


def test_cli_eval_without_checkpoint_fails(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "mode": "centralized", "total_epochs": 5, "eval_epochs": 5,
        "out_dir": str(tmp_path / "none")}))
    assert cli.main(["eval", "--preset", "tiny",
                     "--config", str(cfg_path)]) == 1


def test_cli_compare_and_curve(tmp_path, capsys):
    runs = []
    for i, mode in enumerate(("rcu", "locu")):
        out = tmp_path / mode
        cfg = tmp_path / f"{mode}.json"
        cfg.write_text(json.dumps({
            "mode": mode, "total_epochs": 15, "eval_epochs": 10,
            "out_dir": str(out), "seed": 2}))
        assert cli.main(["train", "--preset", "tiny",
                         "--config", str(cfg)]) == 0
        runs.append(str(out / "metrics.csv"))
    assert cli.main(["compare", *runs]) == 0
    assert "traffic_diff_pct" in capsys.readouterr().out
    assert cli.main(["export-curve", runs[0], "--window", "5"]) == 0
    assert (tmp_path / "rcu" / "curve.csv").exists()


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"gamma": 1.5}))
    assert cli.main(["train", "--config", str(cfg)]) == 1
    assert "gamma" in capsys.readouterr().err
