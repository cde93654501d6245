"""Sweep orchestration: sampled configs, a persistent runs table, reports.

A sweep samples (task weights, fairness weights, head/shared ratios) from a
box under one master seed, trains each method on the shared draws, and
appends one CSV row per run as it finishes, so partial sweeps remain usable.
Reports are a pure function of the finished table: per-method Pareto
frontiers on chosen axes, a dominated-hypervolume score against a shared
reference point, and the accuracy-frontier overlay in fairness space.
"""

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ContractError, UndefinedMetricError
from .losses import FAIRNESS_KINDS, FAIRNESS_TARGETS, FairnessLossKind
from .metrics import StlBaselines, aggregate, evaluate_model, stl_config_hash
from .model import build_model
from .pareto import ParetoPoint, frontier, frontier_quality
from .trainer import METHODS, TrainConfig, train

RUNS_SCHEMA_VERSION = 1

RUNS_COLUMNS = (
    "run_id", "schema_version", "method", "seed",
    "task_weights", "fairness_weights", "head_shared_ratios",
    "fairness_kind", "mmd_bandwidth", "fairness_target",
    "learning_rate", "epochs", "batch_size",
    "err_per_task", "fpr_gap_per_task", "tpr_gap_per_task",
    "err_mean", "fpr_gap_mean", "arfg", "are",
    "flags", "seconds", "timestamp",
)


@dataclass(frozen=True)
class SweepConfig:
    """Sampling box and budget for one sweep.

    `budget` counts runs per method.  Draws are shared across methods so
    method comparisons are paired; vanilla ignores the fairness draws and
    baseline ignores the ratio draws by construction.
    """
    methods: tuple = ("vanilla", "baseline", "mtaf")
    budget: int = 10
    seeds_per_config: int = 1
    master_seed: int = 0
    w1_range: tuple = (0.0, 1.0)
    lambda_range: tuple = (0.0, 5.0)
    ratio_range: tuple = (0.1, 10.0)     # sampled log-uniformly
    learning_rate: float = 0.05
    epochs: int = 1
    batch_size: int = 128
    fairness_kind: str = "mmd"
    mmd_bandwidth: float = 1.0
    fairness_target: str = "equal_opportunity_fpr"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ConfigError("sweep needs a nonempty method list")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.seeds_per_config < 1:
            raise ConfigError("seeds_per_config must be >= 1")
        if self.fairness_kind not in FAIRNESS_KINDS:
            raise ConfigError(f"unknown fairness kind {self.fairness_kind!r}")
        if self.fairness_target not in FAIRNESS_TARGETS:
            raise ConfigError(f"unknown fairness target {self.fairness_target!r}")
        for name in ("w1_range", "lambda_range", "ratio_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not lo <= hi:
                raise ConfigError(f"{name} must satisfy lo <= hi")
        if self.ratio_range[0] <= 0:
            raise ConfigError("ratio_range must be positive (log-uniform)")
        if not 0 <= self.w1_range[0] <= self.w1_range[1] <= 1:
            raise ConfigError("w1_range must lie inside [0, 1]")
        if self.lambda_range[0] < 0:
            raise ConfigError("lambda_range must be nonnegative")

    def to_dict(self):
        return {
            "methods": list(self.methods),
            "budget": self.budget,
            "seeds_per_config": self.seeds_per_config,
            "master_seed": self.master_seed,
            "w1_range": list(self.w1_range),
            "lambda_range": list(self.lambda_range),
            "ratio_range": list(self.ratio_range),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "fairness_kind": self.fairness_kind,
            "mmd_bandwidth": self.mmd_bandwidth,
            "fairness_target": self.fairness_target,
        }

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in d.items() if k in known}
        for key in ("methods", "w1_range", "lambda_range", "ratio_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def sample_configs(sweep, num_tasks):
    """Draw the paired config sequence for every method.

    One stream of (weights, lambdas, ratios) draws under the master seed;
    each method instantiates the same draws with its own semantics.  Returns
    {method: [TrainConfig, ...]} with exactly `budget` entries per method.
    """
    rng = np.random.default_rng(sweep.master_seed)
    num_configs = math.ceil(sweep.budget / sweep.seeds_per_config)
    draws = []
    for i in range(num_configs):
        if num_tasks == 2:
            w1 = float(rng.uniform(*sweep.w1_range))
            weights = (w1, 1.0 - w1)
        else:
            raw = rng.uniform(0.0, 1.0, size=num_tasks)
            total = raw.sum()
            weights = (tuple(raw / total) if total > 0
                       else (1.0 / num_tasks,) * num_tasks)
        lams = tuple(rng.uniform(*sweep.lambda_range, size=num_tasks))
        log_lo, log_hi = np.log(sweep.ratio_range)
        ratios = tuple(np.exp(rng.uniform(log_lo, log_hi, size=num_tasks)))
        draws.append((tuple(weights), lams, ratios))

    kind = FairnessLossKind(sweep.fairness_kind,
                            mmd_bandwidth=sweep.mmd_bandwidth)
    out = {}
    for method in sweep.methods:
        configs = []
        for i, (weights, lams, ratios) in enumerate(draws):
            for k in range(sweep.seeds_per_config):
                if len(configs) == sweep.budget:
                    break
                seed = sweep.master_seed * 100003 + i * sweep.seeds_per_config + k
                configs.append(TrainConfig(
                    method=method,
                    task_weights=weights,
                    fairness_weights=(None if method == "vanilla" else lams),
                    head_shared_ratios=(ratios if method == "mtaf" else None),
                    fairness_kind=kind,
                    fairness_target=sweep.fairness_target,
                    learning_rate=sweep.learning_rate,
                    epochs=sweep.epochs,
                    batch_size=sweep.batch_size,
                    seed=seed))
        out[method] = configs
    return out


def dataset_hash(dataset):
    """Content hash used to key cached STL baselines to a dataset."""
    h = hashlib.sha256()
    for arr in (dataset.dense, dataset.cat, dataset.labels, dataset.sensitive):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    return h.hexdigest()[:12]


def save_baselines(out_dir, dhash, arch, baselines):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"stl_{dhash}_{baselines.config_hash}.json")
    with open(path, "w") as f:
        json.dump({"schema_version": RUNS_SCHEMA_VERSION,
                   "dataset_hash": dhash,
                   "arch": arch.to_dict(),
                   "baselines": baselines.to_dict()}, f, indent=2)
    return path


def load_baselines(out_dir, dhash):
    """Find cached STL baselines for a dataset hash; None when absent."""
    if not os.path.isdir(out_dir):
        return None
    matches = sorted(name for name in os.listdir(out_dir)
                     if name.startswith(f"stl_{dhash}_")
                     and name.endswith(".json"))
    if not matches:
        return None
    with open(os.path.join(out_dir, matches[0])) as f:
        payload = json.load(f)
    return StlBaselines.from_dict(payload["baselines"])


def require_baselines(out_dir, dhash):
    baselines = load_baselines(out_dir, dhash)
    if baselines is None:
        raise ConfigError(
            "no STL baselines cached for this dataset/architecture; "
            "run `fairmtl stl-baseline` first")
    return baselines


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return json.dumps([None if v is None else float(v) for v in value])
    return value


def run_single(train_ds, test_ds, arch, config, baselines, run_id="run",
               emb_dims=None):
    """Train one config, evaluate on the test split, return a runs-table row.

    Rows come back in parsed form (lists of floats, None for missing) and
    match what load_runs reads back; RunsWriter serializes on append.
    Failures never propagate: a diverged or degenerate run comes back as a
    flagged row with its config echoed, so sweeps keep going.
    """
    started = time.perf_counter()
    flags = []
    echo = config.to_dict()
    row = {
        "run_id": run_id,
        "schema_version": RUNS_SCHEMA_VERSION,
        "method": echo["method"],
        "seed": echo["seed"],
        "task_weights": echo["task_weights"],
        "fairness_weights": echo["fairness_weights"],
        "head_shared_ratios": echo["head_shared_ratios"],
        "fairness_kind": echo["fairness_kind"],
        "mmd_bandwidth": echo["mmd_bandwidth"],
        "fairness_target": echo["fairness_target"],
        "learning_rate": echo["learning_rate"],
        "epochs": echo["epochs"],
        "batch_size": echo["batch_size"],
        "err_per_task": None, "fpr_gap_per_task": None,
        "tpr_gap_per_task": None,
        "err_mean": None, "fpr_gap_mean": None, "arfg": None, "are": None,
        "flags": None, "seconds": None, "timestamp": time.time(),
    }
    try:
        model = None
        if emb_dims is not None:
            model = build_model(arch, dense_count=train_ds.dense.shape[1],
                                vocab_sizes=train_ds.vocab_sizes,
                                seed=config.seed, emb_dims=emb_dims)
        trained = train(train_ds, arch, config, model=model)
        per_task = evaluate_model(trained.model, test_ds)
        row["err_per_task"] = [ev.err for ev in per_task]
        row["fpr_gap_per_task"] = [ev.fpr_gap for ev in per_task]
        row["tpr_gap_per_task"] = [ev.tpr_gap for ev in per_task]
        row["err_mean"] = float(np.mean([ev.err for ev in per_task]))
        try:
            metrics = aggregate(per_task, baselines, config=echo)
            row["fpr_gap_mean"] = metrics.fpr_gap_mean
            row["arfg"] = metrics.arfg
            row["are"] = metrics.are
        except UndefinedMetricError as exc:
            flags.append(f"undefined_metric: {exc}")
    except Exception as exc:  # noqa: BLE001 - flagged, never aborts a sweep
        flags.append(f"failed: {type(exc).__name__}: {exc}")
    row["flags"] = "; ".join(flags) if flags else None
    row["seconds"] = round(time.perf_counter() - started, 4)
    return row


class RunsWriter:
    """Append-only writer for runs.csv; one header, unique run ids, flushed
    after every row so interrupted sweeps leave a readable table."""

    def __init__(self, path):
        self.path = path
        self._ids = set()
        self.count = 0
        if os.path.exists(path):
            for row in load_runs(path, parse=False):
                self._ids.add(row["run_id"])
                self.count += 1
        else:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            with open(path, "w", newline="") as f:
                csv.writer(f).writerow(RUNS_COLUMNS)

    def append(self, row):
        if row["run_id"] in self._ids:
            raise ContractError(f"duplicate run_id {row['run_id']!r}")
        self._ids.add(row["run_id"])
        self.count += 1
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([_cell(row[c]) for c in RUNS_COLUMNS])
            f.flush()


def _parse_cell(column, text):
    if text == "":
        return None
    if column in ("task_weights", "fairness_weights", "head_shared_ratios",
                  "err_per_task", "fpr_gap_per_task", "tpr_gap_per_task"):
        return json.loads(text)
    if column in ("seed", "schema_version", "epochs", "batch_size"):
        return int(text)
    if column in ("mmd_bandwidth", "learning_rate", "err_mean",
                  "fpr_gap_mean", "arfg", "are", "seconds", "timestamp"):
        return float(text)
    return text


def load_runs(path, parse=True):
    """Read runs.csv back into dicts; numeric and JSON cells are decoded."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "run_id" not in reader.fieldnames:
            raise ContractError(f"{path}: not a runs table")
        rows = list(reader)
    if not parse:
        return rows
    return [{k: _parse_cell(k, v) for k, v in row.items()} for row in rows]


def _pool_entry(args):
    return run_single(*args)


def run_sweep(train_ds, test_ds, arch, sweep, baselines, out_dir, jobs=1,
              emb_dims=None):
    """Execute a full sweep, appending rows to <out_dir>/runs.csv.

    Work is farmed to a process pool when jobs > 1; results are appended in
    submission order by this process alone, keeping the table serialized.
    """
    configs = sample_configs(sweep, train_ds.num_tasks)
    writer = RunsWriter(os.path.join(out_dir, "runs.csv"))
    tasks = []
    index = writer.count
    for method in sweep.methods:
        for config in configs[method]:
            run_id = f"r{index:05d}-{method}"
            tasks.append((train_ds, test_ds, arch, config, baselines,
                          run_id, emb_dims))
            index += 1

    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_pool_entry, tasks):
                writer.append(row)
                rows.append(row)
    else:
        for args in tasks:
            row = run_single(*args)
            writer.append(row)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _axes_spec(axes, num_tasks):
    if axes == "are_arfg":
        return ("are", "arfg")
    if axes.startswith("task"):
        t = int(axes[4:])
        if not 0 <= t < num_tasks:
            raise ConfigError(f"axes {axes!r} out of range for {num_tasks} tasks")
        return (("err_per_task", t), ("fpr_gap_per_task", t))
    raise ConfigError(f"unknown axes {axes!r}; use are_arfg or task<t>")


def _num_tasks(rows):
    for row in rows:
        if row["err_per_task"]:
            return len(row["err_per_task"])
    raise ContractError("no row carries per-task metrics")


def _coord(row, key):
    if isinstance(key, tuple):
        column, t = key
        values = row[column]
        return None if values is None else values[t]
    return row[key]


def emit_reports(rows, axes, out_dir):
    """Frontier JSON + plot CSV for one axes choice; pure in the rows.

    Flagged rows and rows missing either coordinate are excluded, with
    counts recorded per method.  The hypervolume reference point is the
    componentwise max over every method's kept runs, widened by 10%, so
    areas are comparable across methods.
    """
    num_tasks = _num_tasks(rows)
    xkey, ykey = _axes_spec(axes, num_tasks)
    methods = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])

    kept, excluded = {m: [] for m in methods}, {m: 0 for m in methods}
    for row in rows:
        x, y = _coord(row, xkey), _coord(row, ykey)
        if row["flags"] or x is None or y is None:
            excluded[row["method"]] += 1
        else:
            kept[row["method"]].append(
                ParetoPoint((float(x), float(y)), run_id=row["run_id"]))

    alive = [m for m in methods if kept[m]]
    if not alive:
        raise ContractError(f"no unflagged rows usable for axes {axes!r}")
    all_points = [p for m in alive for p in kept[m]]
    reference = tuple(
        1.1 * max(p.objectives[d] for p in all_points) for d in (0, 1))

    report = {
        "schema_version": RUNS_SCHEMA_VERSION,
        "axes": axes,
        "x": str(xkey), "y": str(ykey),
        "reference_point": list(reference),
        "methods": {},
    }
    plot_rows = []
    for m in methods:
        points = kept[m]
        if not points:
            report["methods"][m] = {"num_runs": 0,
                                    "num_excluded": excluded[m],
                                    "frontier": [],
                                    "frontier_quality": None}
            continue
        front = frontier(points)
        front_ids = {p.run_id for p in front}
        report["methods"][m] = {
            "num_runs": len(points),
            "num_excluded": excluded[m],
            "frontier": [{"run_id": p.run_id,
                          "x": p.objectives[0], "y": p.objectives[1]}
                         for p in front],
            "frontier_quality": frontier_quality(front, reference),
        }
        for p in points:
            plot_rows.append((m, p.objectives[0], p.objectives[1],
                              int(p.run_id in front_ids)))

    report["accuracy_overlay"] = _accuracy_overlay(rows, methods, num_tasks)

    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"frontier_{axes}.json")
    with open(json_path, "w") as f:
        json.dump(report, f, indent=2)
    csv_path = os.path.join(out_dir, f"plotdata_{axes}.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("method", "x", "y", "on_frontier"))
        writer.writerows(plot_rows)
    return report


def _accuracy_overlay(rows, methods, num_tasks):
    """Runs on the per-task-error frontier, shown in fairness coordinates.

    Makes visible how far accuracy-optimal runs sit from the fairness
    frontier.  Only rows with every per-task gap defined participate.
    """
    overlay = {}
    for m in methods:
        usable = [row for row in rows
                  if row["method"] == m and not row["flags"]
                  and row["err_per_task"] and row["fpr_gap_per_task"]
                  and all(g is not None for g in row["fpr_gap_per_task"])]
        if not usable:
            overlay[m] = {"accuracy_frontier": [], "fairness_frontier_run_ids": []}
            continue
        acc_points = [ParetoPoint(tuple(row["err_per_task"]),
                                  run_id=row["run_id"]) for row in usable]
        fair_points = [ParetoPoint(tuple(row["fpr_gap_per_task"]),
                                   run_id=row["run_id"]) for row in usable]
        acc_ids = {p.run_id for p in frontier(acc_points)}
        fair_ids = {p.run_id for p in frontier(fair_points)}
        by_id = {row["run_id"]: row for row in usable}
        overlay[m] = {
            "accuracy_frontier": [
                {"run_id": rid,
                 "err_per_task": by_id[rid]["err_per_task"],
                 "fpr_gap_per_task": by_id[rid]["fpr_gap_per_task"],
                 "also_on_fairness_frontier": rid in fair_ids}
                for rid in sorted(acc_ids)],
            "fairness_frontier_run_ids": sorted(fair_ids),
        }
    return overlay


def stl_cache_key(arch, config, seeds):
    """Hash naming a baseline cache entry; mirrors the metrics-side hash."""
    return stl_config_hash(arch, config, seeds)
