"""Command-line front end: train, eval, compare, export-curve."""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment as xp
from .controllers import evaluate_policy


def _load(args):
    if args.config:
        config = xp.load_config(args.config, preset=args.preset)
    else:
        config = xp.PRESETS[args.preset]
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = xp.validate_config(replace(config, **overrides))
    return config


def _add_common(parser):
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file; missing keys use the preset")
    parser.add_argument("--preset", choices=sorted(xp.PRESETS),
                        default="paper-default")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None,
                        help="output directory")
    parser.add_argument("--mode", type=str, default=None,
                        choices=sorted(xp.MODE_ALIASES))


def cmd_train(args):
    config = _load(args)
    result = xp.run_experiment(config, progress=args.progress)
    print(f"wrote {result['metrics_path']}")
    if result["checkpoint_path"]:
        print(f"wrote {result['checkpoint_path']}")
    return 0


def cmd_eval(args):
    config = _load(args)
    kind, _ = xp.resolve_mode(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if kind in xp.LEARNER_MODES:
        checkpoint = out_dir / "checkpoint.npz"
        if not checkpoint.exists():
            print(f"error: no checkpoint at {checkpoint}; train first",
                  file=sys.stderr)
            return 1
        from .controllers import (CentralizedController, FdController,
                                  PdController)
        loader = {"centralized": CentralizedController, "pd": PdController,
                  "fd": FdController}[kind]
        controller = loader.load(checkpoint, xp.network_config(config))
    else:
        controller = xp.build_controller(config)
    # independent user stream, but the same initial popularity the run saw
    env = xp.make_env(config, xp.derive_seed(config.seed, xp.EVAL_ENV_SALT),
                      popularity_seed=config.seed)
    metrics = evaluate_policy(controller, env, config.eval_epochs)
    records = metrics.pop("records")
    xp.write_metrics(out_dir / "eval_metrics.csv", [], records,
                     config.moving_avg_window)
    for key, value in metrics.items():
        print(f"{key}: {value}")
    print(f"wrote {out_dir / 'eval_metrics.csv'}")
    return 0


def cmd_compare(args):
    table = xp.compare_runs(args.metrics)
    text = xp.format_comparison(table)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_export_curve(args):
    out = args.out or str(Path(args.metrics).with_name("curve.csv"))
    xp.export_learning_curve(args.metrics, args.window, out)
    print(f"wrote {out}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="coopcache",
        description="Cooperative coded-cache updating: training, evaluation, "
                    "and baseline comparison")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training then the evaluation "
                                           "schedule")
    _add_common(p_train)
    p_train.add_argument("--progress", type=int, default=0,
                         help="print a status line every N epochs")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint or a "
                                         "baseline")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="compare evaluation traffic across "
                                           "runs")
    p_cmp.add_argument("metrics", nargs="+", help="metrics.csv paths")
    p_cmp.add_argument("--out", type=str, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_curve = sub.add_parser("export-curve", help="moving-average curve from "
                                                  "a metrics file")
    p_curve.add_argument("metrics", help="metrics.csv path")
    p_curve.add_argument("--window", type=int, default=5000)
    p_curve.add_argument("--out", type=str, default=None)
    p_curve.set_defaults(func=cmd_export_curve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
