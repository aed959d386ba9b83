"""Command line interface.

Subcommands: train, pretrain, evaluate, sweep, hull, report. Exit codes:
0 success, 1 configuration error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, nn
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .errors import ConfigError, CostqError, DataError, TrainingDiverged
from .hull import convex_hull_select
from .pretrain import PretrainConfig, pretrain_classifier_head
from .report import render_run_directory
from .train import (evaluate_params, read_points, sweep as run_sweep,
                    tradeoff_point, train as run_training, write_points)

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit code 1, not argparse's 2)."""

    def error(self, message):
        raise ConfigError(message)


def _add_common_flags(parser):
    parser.add_argument("--config", help="configuration file (INI-style)")
    parser.add_argument("--data", help="dataset CSV (overrides the config)")
    parser.add_argument("--costs", help="cost file; implies cost_mode=file")
    parser.add_argument("--hpc-predictions", help="external classifier predictions file")
    parser.add_argument("--lambda", dest="lam", type=float, help="cost scaling factor")
    parser.add_argument("--seed", type=int, help="training seed")
    parser.add_argument("--split-seed", type=int, help="seed for the data split")
    parser.add_argument("--out-dir", default="runs", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="costq",
                     description="Classify by buying features one at a time.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, description in (
            ("train", "train one agent and write checkpoint plus report"),
            ("pretrain", "supervised initialization of the classification outputs"),
            ("sweep", "train over the configured lambda and seed grid"),
    ):
        p = sub.add_parser(name, help=description)
        _add_common_flags(p)
        if name == "train":
            p.add_argument("--checkpoint",
                           help="initialize from this checkpoint (e.g. pretrained)")

    p = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    _add_common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "validation", "test"))

    p = sub.add_parser("hull", help="select the cost/accuracy frontier from a sweep")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--points", help="points CSV (default: <out-dir>/points.csv)")

    p = sub.add_parser("report", help="render figures and a frontier summary")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--points", help="points CSV (default: <out-dir>/points.csv)")
    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    d = cfg.data
    if args.data:
        d.path = args.data
    if args.costs:
        d.cost_mode = "file"
        d.cost_file = args.costs
    if getattr(args, "hpc_predictions", None):
        d.hpc_predictions = args.hpc_predictions
    if getattr(args, "lam", None) is not None:
        cfg.hp.lam = args.lam
    if getattr(args, "seed", None) is not None:
        cfg.hp.seed = args.seed
    if getattr(args, "split_seed", None) is not None:
        d.split_seed = args.split_seed
    cfg.validate()
    if not d.path:
        raise ConfigError("no dataset given; use --data or the [data] config section")
    return cfg


def _load_inputs(cfg: RunConfig):
    """Dataset (normalized), splits, costs and optional predictions per config."""
    d = cfg.data
    dataset = data.load_dataset(d.path, d.label_column)
    if d.split_files:
        splits = data.load_split_files(d.split_files, dataset.n_samples)
    else:
        splits = data.make_splits(dataset, d.split_fractions, d.split_seed)
    dataset = data.normalize(dataset, splits["train"])
    cost_rng = np.random.default_rng(d.split_seed)
    costs = data.assign_costs(dataset.n_features, d.cost_mode, rng=cost_rng,
                              path=d.cost_file, feature_names=dataset.feature_names)
    hpc = (data.load_hpc_predictions(d.hpc_predictions, dataset)
           if d.hpc_predictions else None)
    return dataset, splits, costs, hpc


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    dataset, splits, costs, hpc = _load_inputs(cfg)
    initial = None
    if getattr(args, "checkpoint", None):
        initial, _, _, meta = load_checkpoint(args.checkpoint)
        log.info("starting from checkpoint %s (run %s)", args.checkpoint,
                 meta.get("run_id", "?"))
    report, _ = run_training(dataset, splits, costs.values, cfg.hp,
                              hpc_predictions=hpc, out_dir=Path(args.out_dir),
                              initial_params=initial)
    print(f"run {report.run_id}: "
          f"validation accuracy {report.final_validation['accuracy']:.4f}, "
          f"mean cost {report.final_validation['mean_cost']:.4f}, "
          f"report at {args.out_dir}/report.json")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _load_run_config(args)
    dataset, splits, costs, hpc = _load_inputs(cfg)
    hp = cfg.hp
    hp.validate()
    seed = hp.resolved_seed()
    streams = np.random.SeedSequence(seed).spawn(2)
    dtype = np.float64 if hp.precision == "double" else np.float32
    train_x = dataset.features[splits["train"]].astype(dtype)
    train_y = dataset.labels[splits["train"]]
    n_actions = dataset.n_classes + dataset.n_features + (1 if hpc is not None else 0)
    theta = nn.init_params(dataset.n_features, n_actions, hp.hidden_sizes,
                           np.random.default_rng(streams[0]), dtype)
    states = hp.pretrain_states if hp.pretrain_states is not None else 100 * len(train_x)
    pcfg = PretrainConfig(state_count=states, learning_rate=hp.lr_pretrain,
                          batch_size=hp.pretrain_batch, lr_scale=hp.lr_scale,
                          lr_min=hp.lr_min)
    losses = pretrain_classifier_head(theta, train_x, train_y, dataset.n_classes,
                                      pcfg, np.random.default_rng(streams[1]),
                                      hp.max_grad_norm)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "pretrained.bin"
    meta = {
        "run_id": f"pretrain_seed{seed}",
        "seed": seed,
        "lambda": repr(hp.lam),
        "class_labels": json.dumps(dataset.class_labels),
        "feature_names": json.dumps(dataset.feature_names),
        "costs": json.dumps([float(c) for c in costs.values]),
        "feature_means": json.dumps([float(v) for v in dataset.feature_means]),
        "feature_stds": json.dumps([float(v) for v in dataset.feature_stds]),
    }
    save_checkpoint(path, theta, theta.copy(), nn.AdamState.for_params(theta), meta)
    final = losses[-1] if losses else float("nan")
    print(f"pretrained on {states} states (final round loss {final:.5f}); "
          f"checkpoint at {path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    d = cfg.data
    theta, _, _, meta = load_checkpoint(args.checkpoint)

    dataset = data.load_dataset(d.path, d.label_column)
    stored_names = json.loads(meta.get("feature_names", "[]"))
    if stored_names and stored_names != dataset.feature_names:
        raise DataError("checkpoint/dataset dimension mismatch: feature names differ")
    stored_classes = json.loads(meta.get("class_labels", "[]"))
    if stored_classes and stored_classes != dataset.class_labels:
        raise DataError("checkpoint/dataset mismatch: class labels differ")
    if d.split_files:
        splits = data.load_split_files(d.split_files, dataset.n_samples)
    else:
        splits = data.make_splits(dataset, d.split_fractions, d.split_seed)
    if "feature_means" in meta:
        dataset = data.apply_recorded_normalization(
            dataset, np.array(json.loads(meta["feature_means"])),
            np.array(json.loads(meta["feature_stds"])))
    if "costs" in meta:
        costs = np.array(json.loads(meta["costs"]))
    else:
        cost_rng = np.random.default_rng(d.split_seed)
        costs = data.assign_costs(dataset.n_features, d.cost_mode, rng=cost_rng,
                                  path=d.cost_file,
                                  feature_names=dataset.feature_names).values
    hpc = (data.load_hpc_predictions(d.hpc_predictions, dataset)
           if d.hpc_predictions else None)
    if meta.get("has_hpc") == "true" and hpc is None:
        raise DataError("checkpoint was trained with an external classifier; "
                        "pass --hpc-predictions")

    lam = cfg.hp.lam if getattr(args, "lam", None) is not None else float(meta.get("lambda", cfg.hp.lam))
    idx = splits[args.split]
    stats = evaluate_params(
        theta, dataset.features[idx].astype(theta.dtype), dataset.labels[idx],
        costs, lam, hpc_predictions=hpc[idx] if hpc is not None else None)
    seed = int(meta.get("seed", -1))
    point = tradeoff_point(stats, lam, seed, args.split,
                           run_id=meta.get("run_id", ""))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_points(out_dir / "points.csv", [point], append=True)
    (out_dir / f"evaluation_{args.split}.json").write_text(
        json.dumps(stats.to_dict(), indent=2) + "\n")
    print(",".join(str(v) for v in (
        point.lam, point.seed, point.split, point.mean_cost, point.accuracy,
        point.mean_reward, point.objective)))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    dataset, splits, costs, hpc = _load_inputs(cfg)
    points, failures = run_sweep(
        dataset, splits, costs.values, cfg.hp, cfg.sweep.lambdas, cfg.sweep.seeds,
        hpc_predictions=hpc, out_dir=Path(args.out_dir))
    print(f"sweep finished: {len(points)} points, {len(failures)} failed run(s); "
          f"points at {args.out_dir}/points.csv")
    return 0


def _points_path(args) -> Path:
    if args.points:
        return Path(args.points)
    return Path(args.out_dir) / "points.csv"


def _cmd_hull(args) -> int:
    points = read_points(_points_path(args))
    validation = [p for p in points if p.split == "validation"]
    if not validation:
        raise DataError("no validation points found; run a sweep first")
    selected = convex_hull_select(validation)
    selected_ids = {p.run_id for p in selected}
    rows = selected + [p for p in points
                       if p.split == "test" and p.run_id in selected_ids]
    out = Path(args.out_dir) / "hull.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_points(out, rows)
    for p in selected:
        print(f"selected {p.run_id}: cost {p.mean_cost:.4f}, "
              f"accuracy {p.accuracy:.4f}")
    return 0


def _cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    points_path = _points_path(args)
    points = read_points(points_path) if points_path.exists() else []
    written = render_run_directory(out_dir, points)
    if not written:
        raise DataError(f"nothing to render in {out_dir}")
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "pretrain": _cmd_pretrain,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "hull": _cmd_hull,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except CostqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
