"""Command-line front end: baselines, single runs, sweeps, and reports.

Subcommands:
  stl-baseline  train per-task single-task reference models and cache them
  train         one multi-task run appended to <out>/runs.csv
  sweep         sampled multi-run sweep appended to <out>/runs.csv
  report        frontier JSON + plot CSVs from a finished runs table

`--dataset` takes a preset name (uci_adult, german_credit, lsac, synth) or
a path to a schema JSON.  Real datasets are read from <data_dir>/train.csv
and test.csv (see scripts/prepare_*.py); `synth` is generated on the fly.
The optional `--config` JSON carries sections: "synth", "arch", "train",
"sweep", "stl", plus "data_dir"; "train"/"sweep" mirror the TrainConfig /
SweepConfig fields exactly.
"""

import argparse
import json
import os
import sys

from .data import (SynthSpec, load_dataset, load_schema, resolve,
                   split_random, synth_generate)
from .exceptions import ConfigError
from .metrics import run_stl_baselines
from .presets import (DATASET_PRESETS, SCHEMA_PRESETS, arch_for,
                      schema_path, train_settings_for)
from .model import ArchConfig
from .sweep import (RunsWriter, SweepConfig, dataset_hash, emit_reports,
                    load_runs, require_baselines, run_single, run_sweep,
                    save_baselines, _num_tasks)
from .trainer import TrainConfig


def _load_config(path):
    if path is None:
        return {}
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def _pair_hash(train_ds, test_ds):
    return dataset_hash(train_ds)[:8] + dataset_hash(test_ds)[:4]


class ResolvedData:
    def __init__(self, name, train_ds, test_ds, arch, emb_dims):
        self.name = name
        self.train_ds = train_ds
        self.test_ds = test_ds
        self.arch = arch
        self.emb_dims = emb_dims
        self.pair_hash = _pair_hash(train_ds, test_ds)


def resolve_data(dataset_arg, cfg):
    """Turn --dataset plus config sections into loaded train/test splits.

    The synthetic dataset draws from config-held seeds (default 0), never
    from --seed, so every subcommand sees the same rows and the cached
    baselines stay addressable.
    """
    if dataset_arg == "synth":
        synth_cfg = dict(cfg.get("synth", {}))
        synth_cfg.setdefault("n", 4000)
        spec = SynthSpec(**synth_cfg)
        full = synth_generate(spec, seed=cfg.get("synth_seed", 0))
        train_ds, test_ds = split_random(
            full, cfg.get("split_fraction", 0.8), cfg.get("split_seed", 0))
        arch = (ArchConfig.from_dict(cfg["arch"]) if "arch" in cfg
                else arch_for("synth"))
        if arch.num_tasks != spec.num_tasks:
            arch = ArchConfig(num_tasks=spec.num_tasks,
                              shared_layer_sizes=arch.shared_layer_sizes,
                              head_layer_sizes=arch.head_layer_sizes,
                              embedding_dim=arch.embedding_dim)
        return ResolvedData("synth", train_ds, test_ds, arch, None)

    if dataset_arg in SCHEMA_PRESETS:
        name, path = dataset_arg, schema_path(dataset_arg)
    else:
        name, path = "custom", dataset_arg
        if not os.path.exists(path):
            raise ConfigError(
                f"--dataset {dataset_arg!r} is neither a preset "
                f"({', '.join(DATASET_PRESETS)}) nor a schema file")
    spec = load_schema(path)
    data_dir = cfg.get("data_dir", os.path.join("data", name))
    train_csv = os.path.join(data_dir, "train.csv")
    test_csv = os.path.join(data_dir, "test.csv")
    hint = (f"see scripts/prepare_{name}.py" if name in SCHEMA_PRESETS
            else "supply train.csv/test.csv matching the schema")
    for p in (train_csv, test_csv):
        if not os.path.exists(p):
            raise ConfigError(f"{p} not found; prepare the dataset first "
                              f"({hint}) or set data_dir in --config")
    spec = resolve(spec, train_csv)
    train_ds = load_dataset(train_csv, spec, split="train")
    test_ds = load_dataset(test_csv, spec, split="test")
    if train_ds.rejected or test_ds.rejected:
        print(f"rejected rows: train {train_ds.rejected}, "
              f"test {test_ds.rejected}", file=sys.stderr)
    arch = (ArchConfig.from_dict(cfg["arch"]) if "arch" in cfg
            else arch_for(name, num_tasks=spec.num_tasks))
    emb_dims = tuple(c.embedding_dim for c in spec.categorical)
    if all(d is None for d in emb_dims):
        emb_dims = None
    return ResolvedData(name, train_ds, test_ds, arch, emb_dims)


def _train_config(section, data, seed_override):
    d = dict(section)
    defaults = train_settings_for(data.name)
    for key, value in defaults.items():
        d.setdefault(key, value)
    d.setdefault("method", "vanilla")
    T = data.train_ds.num_tasks
    d.setdefault("task_weights", [1.0 / T] * T)
    if seed_override is not None:
        d["seed"] = seed_override
    return TrainConfig.from_dict(d)


def cmd_stl_baseline(args):
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else 0
    data = resolve_data(args.dataset, cfg)
    stl_cfg = dict(cfg.get("stl", {}))
    seeds = [int(s) for s in stl_cfg.pop("seeds", range(seed, seed + 5))]
    settings = train_settings_for(data.name)
    settings.update({k: stl_cfg[k] for k in
                     ("learning_rate", "epochs", "batch_size") if k in stl_cfg})
    config = TrainConfig(method="vanilla", task_weights=(1.0,),
                         seed=seeds[0], **settings)
    print(f"training {data.train_ds.num_tasks} single-task baselines "
          f"x {len(seeds)} seeds on {data.name}...")
    baselines = run_stl_baselines(data.train_ds, data.test_ds, data.arch,
                                  config, seeds)
    path = save_baselines(args.out, data.pair_hash, data.arch, baselines)
    for t in range(baselines.num_tasks):
        print(f"  task {t}: err={baselines.errs[t]:.4f} "
              f"fpr_gap={_fmt(baselines.fpr_gaps[t])} "
              f"tpr_gap={_fmt(baselines.tpr_gaps[t])}")
    print(f"cached: {path}")
    return 0


def _fmt(v):
    return "undefined" if v is None else f"{v:.4f}"


def cmd_train(args):
    cfg = _load_config(args.config)
    data = resolve_data(args.dataset, cfg)
    baselines = require_baselines(args.out, data.pair_hash)
    config = _train_config(cfg.get("train", cfg), data, args.seed)
    writer = RunsWriter(os.path.join(args.out, "runs.csv"))
    run_id = f"r{writer.count:05d}-{config.method}"
    row = run_single(data.train_ds, data.test_ds, data.arch, config,
                     baselines, run_id=run_id, emb_dims=data.emb_dims)
    writer.append(row)
    print(f"{run_id}: err_mean={row['err_mean']} arfg={row['arfg']} "
          f"are={row['are']} flags={row['flags'] or 'none'}")
    print(f"appended to {writer.path}")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args.config)
    data = resolve_data(args.dataset, cfg)
    baselines = require_baselines(args.out, data.pair_hash)
    sweep_cfg = dict(cfg.get("sweep", {}))
    for key, value in train_settings_for(data.name).items():
        sweep_cfg.setdefault(key, value)
    if args.seed is not None:
        sweep_cfg["master_seed"] = args.seed
    sweep = SweepConfig.from_dict(sweep_cfg)
    total = sweep.budget * len(sweep.methods)
    print(f"sweep: {sweep.budget} runs x {len(sweep.methods)} methods "
          f"= {total} on {data.name} (jobs={args.jobs})")
    rows = run_sweep(data.train_ds, data.test_ds, data.arch, sweep,
                     baselines, args.out, jobs=args.jobs,
                     emb_dims=data.emb_dims)
    flagged = sum(1 for r in rows if r["flags"])
    print(f"done: {len(rows)} rows appended, {flagged} flagged")
    print(f"next: fairmtl report --out {args.out}")
    return 0


def cmd_report(args):
    runs_path = os.path.join(args.out, "runs.csv")
    if not os.path.exists(runs_path):
        raise ConfigError(f"{runs_path} not found; run a sweep first")
    rows = load_runs(runs_path)
    if not rows:
        raise ConfigError(f"{runs_path} has no rows")
    num_tasks = _num_tasks(rows)
    for axes in ["are_arfg"] + [f"task{t}" for t in range(num_tasks)]:
        try:
            report = emit_reports(rows, axes, args.out)
        except (ConfigError, ValueError) as exc:
            print(f"axes {axes}: skipped ({exc})", file=sys.stderr)
            continue
        print(f"axes {axes} (reference "
              f"{tuple(round(v, 4) for v in report['reference_point'])}):")
        for method, entry in report["methods"].items():
            quality = entry["frontier_quality"]
            print(f"  {method:9s} runs={entry['num_runs']:4d} "
                  f"excluded={entry['num_excluded']:3d} "
                  f"frontier={len(entry['frontier']):3d} "
                  f"quality={'n/a' if quality is None else f'{quality:.6f}'}")
    print(f"wrote frontier_<axes>.json / plotdata_<axes>.csv under {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairmtl",
        description="Multi-task fairness training, sweeps, and frontier reports")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True, jobs=False):
        p.add_argument("--config", default=None, help="JSON config path")
        if dataset:
            p.add_argument("--dataset", required=True,
                           help="preset name or schema JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="parallel worker processes")

    p = sub.add_parser("stl-baseline",
                       help="train and cache single-task reference models")
    common(p)
    p.set_defaults(func=cmd_stl_baseline)

    p = sub.add_parser("train", help="run one configuration")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a sampled sweep")
    common(p, jobs=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="emit frontier reports from runs.csv")
    common(p, dataset=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
