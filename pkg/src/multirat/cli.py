"""Command-line entry points for the simulator and the experiment harness."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dataset import build_per_rat_datasets, export_csv
from .experiments import (CampaignCache, ExperimentConfig, exp_baselines,
                          exp_handover, exp_horizon_sweep, exp_traj_sweep,
                          exp_window_sweep, run_all, train_predictor,
                          window_for, write_rows_csv)
from .models import evaluate_rmse, load_checkpoint, save_checkpoint
from .simengine import export_traces_csv, simulate_campaign
from .topology import (NodeKind, build_default_topology, export_trajectories_csv,
                       generate_trajectory_set, save_topology)


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.full:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "full_scale": True})
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(assertions) -> int:
    for a in assertions:
        status = "PASS" if a.passed else "FAIL"
        print(f"{status} {a.name}" + (f" ({a.detail})" if a.detail else ""))
    return 0 if all(a.passed for a in assertions) else 1


def cmd_topology(cfg):
    out = _out(cfg)
    topo = build_default_topology(cfg.seed, area=cfg.area)
    save_topology(topo, out / "topology.json")
    print(f"wrote {out / 'topology.json'}")
    return 0


def cmd_simulate(cfg):
    out = _out(cfg)
    topo = build_default_topology(cfg.seed, area=cfg.area)
    trajs = generate_trajectory_set(
        topo, cfg.handover_n_t, seed=cfg.seed, n_waypoints=cfg.n_waypoints,
        speed=cfg.speed_mps, sample_interval=cfg.sample_interval_s,
        max_steps=cfg.max_steps)
    export_trajectories_csv(trajs, out / "trajectories.csv")
    traces = simulate_campaign(topo, trajs, seed=cfg.seed)
    export_traces_csv(traces, out / "trace_bs.csv", out / "trace_ap.csv")
    print(f"wrote {out / 'trace_bs.csv'} and {out / 'trace_ap.csv'}")
    return 0


def cmd_dataset(cfg):
    out = _out(cfg)
    cache = CampaignCache(cfg)
    traces = cache.traces(cfg.handover_n_t)
    bs, ap = build_per_rat_datasets(traces, cfg.window_bs, cfg.window_ap, 1,
                                    cfg.split_ratio, seed=cfg.seed,
                                    max_windows=cfg.max_windows)
    export_csv(bs, out / "dataset_bs.csv")
    export_csv(ap, out / "dataset_ap.csv")
    print(f"wrote {out / 'dataset_bs.csv'} and {out / 'dataset_ap.csv'}")
    return 0


def cmd_train(cfg):
    out = _out(cfg)
    cache = CampaignCache(cfg)
    traces = cache.traces(cfg.handover_n_t)
    for kind, name in ((NodeKind.CELLULAR_BS, "model_bs.npz"),
                       (NodeKind.WIFI_AP, "model_ap.npz")):
        from .dataset import build_dataset
        split = build_dataset(traces, kind, window_for(cfg, kind), 1,
                              cfg.split_ratio, seed=cfg.seed,
                              max_windows=cfg.max_windows)
        model = train_predictor(cfg, split, kind, seed_tag=900 + int(kind))
        save_checkpoint(model, out / name)
        rmse = evaluate_rmse(model, split.test)[0]
        print(f"{name}: test RMSE {rmse:.4f} dB")
    return 0


def cmd_eval(cfg):
    out = _out(cfg)
    cache = CampaignCache(cfg)
    traces = cache.traces(cfg.handover_n_t)
    from .dataset import build_dataset
    for kind, name in ((NodeKind.CELLULAR_BS, "model_bs.npz"),
                       (NodeKind.WIFI_AP, "model_ap.npz")):
        path = out / name
        if not path.exists():
            print(f"missing checkpoint {path}; run `multirat train` first",
                  file=sys.stderr)
            return 2
        model = load_checkpoint(path)
        split = build_dataset(traces, kind, model.window, model.output_dim,
                              cfg.split_ratio, seed=cfg.seed,
                              max_windows=cfg.max_windows)
        rmse = evaluate_rmse(model, split.test)[0]
        print(f"{name}: test RMSE {rmse:.4f} dB")
    return 0


def _single_experiment(cfg, fn, name):
    out = _out(cfg)
    result = fn(cfg, CampaignCache(cfg))
    write_rows_csv(result, out / f"{name}.csv")
    return _report(result.assertions)


def cmd_exp_handover(cfg):
    out = _out(cfg)
    result, timeline_rows = exp_handover(cfg, CampaignCache(cfg))
    write_rows_csv(result, out / "handover.csv")
    if timeline_rows:
        import csv as _csv
        cols = list(timeline_rows[0].keys())
        with open(out / "handover_timeline.csv", "w", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow(cols)
            for row in timeline_rows:
                writer.writerow([row[c] for c in cols])
    return _report(result.assertions)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="multirat",
        description="Multi-RAT mobility simulator and predictive handover "
                    "experiment harness")
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--full", action="store_true",
                        help="full-scale sweeps instead of desk scale")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("topology", "simulate", "dataset", "train", "eval",
                 "exp-window", "exp-traj", "exp-horizon", "exp-baselines",
                 "exp-handover", "run-all"):
        sub.add_parser(name)
    args = parser.parse_args(argv)
    cfg = _load_config(args)

    handlers = {
        "topology": lambda: cmd_topology(cfg),
        "simulate": lambda: cmd_simulate(cfg),
        "dataset": lambda: cmd_dataset(cfg),
        "train": lambda: cmd_train(cfg),
        "eval": lambda: cmd_eval(cfg),
        "exp-window": lambda: _single_experiment(cfg, exp_window_sweep,
                                                 "window_sweep"),
        "exp-traj": lambda: _single_experiment(cfg, exp_traj_sweep,
                                               "traj_sweep"),
        "exp-horizon": lambda: _single_experiment(cfg, exp_horizon_sweep,
                                                  "horizon_sweep"),
        "exp-baselines": lambda: _single_experiment(cfg, exp_baselines,
                                                    "baselines"),
        "exp-handover": lambda: cmd_exp_handover(cfg),
        "run-all": lambda: _report(run_all(cfg)),
    }
    return handlers[args.command]()


if __name__ == "__main__":
    sys.exit(main())
