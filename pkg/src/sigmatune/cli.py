"""Command-line entry point: ``sigmatune <command> [options]``.

Exit codes: 0 success (a diverged run is a reported status, not a failure),
2 usage/configuration/input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .adaptive import SIGMA_UPDATE, MemoryBuffer, read_event_log
from .config import RunConfig, config_from_dict, load_config, load_scenario
from .exceptions import ConfigError, ParseFailure, SigmaTuneError
from .harness import (
    TRAINLOG_COLUMNS,
    compute_metrics,
    export_dataset,
    export_train_log,
    export_trajectory,
    import_dataset,
    import_trajectory,
    make_xy,
    read_csv,
    split_dataset,
    trajectory_metrics,
)
from .pipeline import build_dataset, initial_buffer, run_adaptive_scenario, run_simulation
from .sigmas import SigmaBinding, parse_coupling
from .surrogate import ErrorSurrogate

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad or missing user input; maps to exit code 2."""


def _require(path, what):
    if path is None:
        raise UsageError(f"{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _trajectory_summary(traj, cfg):
    m = trajectory_metrics(traj, window=cfg.adaptive.window)
    return {
        "status": traj.status,
        "rows": len(traj),
        "diverged_at": traj.diverged_at,
        "rmse_e": m.rmse,
        "max_abs_e_after_0.5s": m.max_err_after,
    }


# -- commands ----------------------------------------------------------------

def cmd_simulate(args, cfg, out):
    scenario = load_scenario(args.scenario) if args.scenario else None
    traj = run_simulation(cfg, scenario)
    export_trajectory(traj, out / "trajectory.csv")
    if args.plot:
        (out / "error.svg").write_text(plotting.error_plot(traj.t, traj.e))
        (out / "phase.svg").write_text(plotting.phase_plot(traj.x, traj.v))
    summary = _trajectory_summary(traj, cfg)
    _write_json(out / "summary.json", summary)
    print(f"simulate: {summary['status']}, {summary['rows']} rows -> {out / 'trajectory.csv'}")
    return summary


def cmd_collect(args, cfg, out):
    if args.episodes is not None:
        cfg.collection = replace(cfg.collection, n_episodes=args.episodes)
    binding = SigmaBinding.parse(args.binding) if args.binding else None
    ds = build_dataset(cfg, binding=binding)
    path = Path(args.out) if args.out else out / "dataset.csv"
    export_dataset(ds, path)
    summary = {
        "records": len(ds),
        "episodes": len(ds.episodes),
        "diverged_episodes": sum(1 for e in ds.episodes if e[2]),
        "mean_err": float(np.mean(ds.col("err"))) if len(ds) else None,
    }
    _write_json(out / "summary.json", summary)
    print(f"collect: {summary['records']} records from {summary['episodes']} episodes -> {path}")
    return summary


def _surrogate_overrides(args, cfg):
    s = cfg.surrogate
    for flag, key in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"),
                      ("horizon", "horizon")):
        val = getattr(args, flag, None)
        if val is not None:
            s = replace(s, **{key: val})
    if getattr(args, "include_u", False):
        s = replace(s, include_u=True)
    cfg.surrogate = s


def cmd_train(args, cfg, out):
    _require(args.dataset, "--dataset")
    _surrogate_overrides(args, cfg)
    seed = args.train_seed if args.train_seed is not None else cfg.seed
    ds = split_dataset(import_dataset(args.dataset, cfg.simulation.divergence_bound),
                       seed=cfg.section_seed("collection"))
    s = cfg.surrogate
    bound = cfg.simulation.divergence_bound
    Xtr, ytr = make_xy(ds, ds.train_idx, s.horizon, s.include_u, bound)
    Xte, yte = make_xy(ds, ds.test_idx, s.horizon, s.include_u, bound)
    net = s.estimator(seed)
    net.fit(Xtr, ytr, eval_set=(Xte, yte) if len(yte) else None)
    ckpt = Path(args.out) if args.out else out / "surrogate.npz"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    net.save(ckpt)
    export_train_log(net.train_log_, out / "trainlog.csv")
    summary = {
        "checkpoint": str(ckpt),
        "epochs": len(net.train_log_.lr),
        "train_rmse": net.train_log_.train_rmse[-1],
        "test_rmse": net.train_log_.test_rmse[-1] if len(yte) else None,
        "n_train": int(len(ytr)),
        "n_test": int(len(yte)),
    }
    _write_json(out / "summary.json", summary)
    print(f"train: test RMSE {summary['test_rmse']} -> {ckpt}")
    return summary


def cmd_adaptive(args, cfg, out):
    _require(args.checkpoint, "--checkpoint")
    net = ErrorSurrogate.load(args.checkpoint)
    a = cfg.adaptive
    if args.threshold is not None:
        a = replace(a, err_threshold=args.threshold)
    if args.window is not None:
        a = replace(a, window=args.window)
    if args.max_attempts is not None:
        a = replace(a, max_attempts=args.max_attempts)
    if args.binding is not None:
        a = replace(a, binding=args.binding)
    if args.coupling is not None:
        a = replace(a, coupling=parse_coupling(args.coupling))
    if args.adaptive_seed is not None:
        a = replace(a, seed=args.adaptive_seed)
    a.__post_init__()
    cfg.adaptive = a
    # the checkpoint fixes the horizon the buffer must use
    cfg.surrogate = replace(cfg.surrogate, horizon=net.horizon, include_u=net.include_u)
    scenario = load_scenario(args.scenario) if args.scenario else None

    if args.dataset:
        ds = split_dataset(import_dataset(args.dataset, cfg.simulation.divergence_bound),
                           seed=cfg.section_seed("collection"))
        Xtr, ytr = make_xy(ds, ds.train_idx, net.horizon, net.include_u,
                           cfg.simulation.divergence_bound)
        buf = initial_buffer(cfg, ds, Xtr, ytr)
    else:
        # no training data: empty memory, and the threshold as the reference mean
        buf = MemoryBuffer(np.empty((0, net.n_features_in_)), np.empty(0),
                           prev_sys_avg=a.err_threshold, horizon=net.horizon)

    res = run_adaptive_scenario(cfg, net, buf, scenario)
    export_trajectory(res.trajectory, out / "trajectory.csv")
    res.events.export(out / "eventlog.csv")
    summary = _trajectory_summary(res.trajectory, cfg)
    summary.update({
        "sigma_updates": len(res.events.of_kind(SIGMA_UPDATE)),
        "no_improvement": len(res.events.of_kind("NoImprovement")),
        "retrains": len(res.events.of_kind("Retrain")),
        "memo_size": int(len(res.buffer.memo_y)),
    })
    _write_json(out / "summary.json", summary)
    print(f"adaptive: {summary['status']}, {summary['sigma_updates']} sigma updates, "
          f"{summary['retrains']} retrains -> {out}")
    return summary


def _table(metrics: dict):
    width = max(len(k) for k in metrics)
    lines = []
    for key, val in metrics.items():
        if isinstance(val, float):
            val = f"{val:.6g}"
        elif isinstance(val, list):
            val = f"[{len(val)} values]"
        lines.append(f"{key:<{width}}  {val}")
    return "\n".join(lines)


def cmd_evaluate(args, cfg, out):
    if args.predictions:
        rows = read_csv(_require(args.predictions, "--predictions"), ("prediction", "target"))
        pred = [r["prediction"] for r in rows]
        target = [r["target"] for r in rows]
        metrics = compute_metrics(predictions=pred, targets=target).to_dict()
    elif args.trajectory:
        traj = import_trajectory(_require(args.trajectory, "--trajectory"))
        metrics = trajectory_metrics(traj, transient=args.transient,
                                     window=cfg.adaptive.window).to_dict()
        metrics["status"] = traj.status
    elif args.checkpoint:
        net = ErrorSurrogate.load(_require(args.checkpoint, "--checkpoint"))
        ds = split_dataset(import_dataset(_require(args.dataset, "--dataset"),
                                          cfg.simulation.divergence_bound),
                           seed=cfg.section_seed("collection"))
        X, y = make_xy(ds, ds.test_idx, net.horizon, net.include_u,
                       cfg.simulation.divergence_bound)
        metrics = compute_metrics(predictions=net.predict(X), targets=y).to_dict()
    else:
        raise UsageError("evaluate needs --trajectory, --predictions or --checkpoint/--dataset")
    _write_json(out / "metrics.json", metrics)
    if args.json:
        print(json.dumps(metrics, sort_keys=True))
    else:
        print(_table(metrics))
    return metrics


def cmd_plot(args, cfg, out):
    src = _require(args.input, "--input")
    kind = args.kind
    if kind in ("error", "phase"):
        traj = import_trajectory(src)
        svg = plotting.error_plot(traj.t, traj.e) if kind == "error" else \
            plotting.phase_plot(traj.x, traj.v)
    elif kind == "sigmas":
        log = read_event_log(src)
        ups = log.of_kind(SIGMA_UPDATE)
        svg = plotting.sigma_plot([r["t"] for r in ups], [r["s1"] for r in ups],
                                  [r["s2"] for r in ups])
    else:
        rows = read_csv(src, TRAINLOG_COLUMNS)
        test = [float("nan") if r["test_rmse"] is None else r["test_rmse"] for r in rows]
        svg = plotting.rmse_plot([r["epoch"] for r in rows], [r["train_rmse"] for r in rows], test)
    path = Path(args.out) if args.out else out / f"{kind}.svg"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    print(f"plot: {path}")
    return {"plot": str(path)}


COMMANDS = {
    "simulate": cmd_simulate,
    "collect": cmd_collect,
    "train": cmd_train,
    "adaptive": cmd_adaptive,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", default=None, help="output directory (default: out)")

    p = argparse.ArgumentParser(prog="sigmatune", parents=[common],
                                description="Surrogate-guided retuning of a CLF tracking controller.")
    sub = p.add_subparsers(dest="command", required=True)
    # repeating the global flags on each subcommand lets them go either side of it
    sub_common = argparse.ArgumentParser(add_help=False)
    sub_common.add_argument("--config", default=argparse.SUPPRESS)
    sub_common.add_argument("--out-dir", default=argparse.SUPPRESS)

    s = sub.add_parser("simulate", parents=[sub_common], help="run the closed loop")
    s.add_argument("--scenario")
    s.add_argument("--plot", action="store_true", help="also write error and phase SVGs")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    s = sub.add_parser("collect", parents=[sub_common], help="generate a training dataset")
    s.add_argument("--episodes", type=int)
    s.add_argument("--binding", help="sigma binding t1,t2 for the sweep")
    s.add_argument("--out", help="dataset CSV path")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    s = sub.add_parser("train", parents=[sub_common], help="train the error surrogate")
    s.add_argument("--dataset")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--include-u", action="store_true")
    s.add_argument("--seed", dest="train_seed", type=int)
    s.add_argument("--out", help="checkpoint path")

    s = sub.add_parser("adaptive", parents=[sub_common], help="run the adaptive loop")
    s.add_argument("--checkpoint")
    s.add_argument("--dataset", help="training dataset that seeds the rehearsal memory")
    s.add_argument("--scenario")
    s.add_argument("--threshold", type=float)
    s.add_argument("--window", type=int)
    s.add_argument("--max-attempts", type=int)
    s.add_argument("--binding")
    s.add_argument("--coupling")
    s.add_argument("--seed", dest="adaptive_seed", type=int)

    s = sub.add_parser("evaluate", parents=[sub_common], help="compute metrics")
    s.add_argument("--trajectory")
    s.add_argument("--predictions", help="CSV with columns prediction,target")
    s.add_argument("--checkpoint")
    s.add_argument("--dataset")
    s.add_argument("--transient", type=float, default=0.5)
    s.add_argument("--json", action="store_true", help="print JSON instead of a table")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    s = sub.add_parser("plot", parents=[sub_common], help="render an SVG line plot")
    s.add_argument("--kind", choices=("error", "phase", "sigmas", "rmse"), required=True)
    s.add_argument("--input")
    s.add_argument("--out")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        out = Path(args.out_dir or "out")
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigError, ParseFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SigmaTuneError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
