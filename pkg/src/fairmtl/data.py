"""Dataset ingestion, task-label derivation, batching, and synthesis.

CSV files are interpreted through a JSON schema (FeatureSpec): which columns
are dense or categorical inputs, how each binary task label derives from a
source column via a predicate, and how the sensitive attribute is encoded.
Standardization statistics and categorical vocabularies are fitted once on
the training file (`resolve`) and frozen, so test data never leaks into them.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigError, RowParseError, SchemaError

OOV_INDEX = 0  # reserved slot for unseen categorical tokens
PREDICATE_OPS = ("gt", "ge", "eq")


@dataclass(frozen=True)
class DenseCol:
    name: str
    mean: float = None
    sd: float = None


@dataclass(frozen=True)
class CatCol:
    name: str
    vocab: tuple = None          # known tokens, sorted; index = position + 1
    embedding_dim: int = None    # optional per-column override

    @property
    def vocab_size(self):
        return None if self.vocab is None else len(self.vocab) + 1


@dataclass(frozen=True)
class TaskDef:
    name: str
    source: str
    op: str
    constant: object
    standardize: bool = False    # apply predicate to the z-score of source
    mean: float = None
    sd: float = None


@dataclass(frozen=True)
class SensitiveCol:
    name: str
    encoding: tuple              # ((token, 0/1), ...)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    dense: tuple
    categorical: tuple
    tasks: tuple
    sensitive: SensitiveCol = None
    missing_values: tuple = ("", "?")

    @property
    def num_tasks(self):
        return len(self.tasks)

    @property
    def resolved(self):
        return (all(c.mean is not None for c in self.dense)
                and all(c.vocab is not None for c in self.categorical)
                and all(t.mean is not None for t in self.tasks
                        if t.standardize))

    def columns(self):
        names = ([c.name for c in self.dense]
                 + [c.name for c in self.categorical]
                 + [t.source for t in self.tasks])
        if self.sensitive is not None:
            names.append(self.sensitive.name)
        return names

    def vocab_sizes(self):
        if not self.resolved:
            raise SchemaError("spec not resolved; call resolve() first")
        return tuple(c.vocab_size for c in self.categorical)


def _validate_spec(spec):
    seen = set()
    for name in ([c.name for c in spec.dense]
                 + [c.name for c in spec.categorical]
                 + [t.name for t in spec.tasks]):
        if name in seen:
            raise SchemaError(f"duplicate column/task name {name!r}")
        seen.add(name)
    if not spec.tasks:
        raise SchemaError("schema declares no tasks")
    if not spec.dense and not spec.categorical:
        raise SchemaError("schema declares no input features")
    for t in spec.tasks:
        if t.op not in PREDICATE_OPS:
            raise SchemaError(f"task {t.name!r}: unknown predicate op {t.op!r}")
        if t.op in ("gt", "ge") and isinstance(t.constant, str):
            raise SchemaError(f"task {t.name!r}: {t.op} needs a numeric constant")
        if t.standardize and t.op == "eq":
            raise SchemaError(f"task {t.name!r}: standardize requires gt/ge")
    if spec.sensitive is not None:
        values = {v for _, v in spec.sensitive.encoding}
        if not values <= {0, 1}:
            raise SchemaError("sensitive encoding must map tokens to 0 or 1")
    return spec


def load_schema(path):
    """Read a FeatureSpec from a schema JSON file."""
    with open(path) as f:
        raw = json.load(f)
    return spec_from_dict(raw)


def spec_from_dict(raw):
    try:
        dense = tuple(
            DenseCol(name=c["name"], mean=c.get("mean"), sd=c.get("sd"))
            if isinstance(c, dict) else DenseCol(name=c)
            for c in raw.get("dense", ()))
        categorical = tuple(
            CatCol(name=c["name"],
                   vocab=tuple(c["vocab"]) if "vocab" in c else None,
                   embedding_dim=c.get("embedding_dim"))
            if isinstance(c, dict) else CatCol(name=c)
            for c in raw.get("categorical", ()))
        tasks = tuple(
            TaskDef(name=t["name"], source=t["source"], op=t["op"],
                    constant=t["constant"],
                    standardize=bool(t.get("standardize", False)),
                    mean=t.get("mean"), sd=t.get("sd"))
            for t in raw["tasks"])
        sens = None
        if raw.get("sensitive") is not None:
            s = raw["sensitive"]
            sens = SensitiveCol(name=s["column"],
                                encoding=tuple(sorted(s["encoding"].items())))
        spec = FeatureSpec(name=raw.get("name", "unnamed"),
                           dense=dense, categorical=categorical, tasks=tasks,
                           sensitive=sens,
                           missing_values=tuple(raw.get("missing_values",
                                                        ("", "?"))))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed schema: {exc}") from exc
    return _validate_spec(spec)


def spec_to_dict(spec):
    out = {
        "name": spec.name,
        "missing_values": list(spec.missing_values),
        "dense": [{"name": c.name, "mean": c.mean, "sd": c.sd}
                  for c in spec.dense],
        "categorical": [
            {"name": c.name,
             **({"vocab": list(c.vocab)} if c.vocab is not None else {}),
             **({"embedding_dim": c.embedding_dim}
                if c.embedding_dim is not None else {})}
            for c in spec.categorical],
        "tasks": [{"name": t.name, "source": t.source, "op": t.op,
                   "constant": t.constant, "standardize": t.standardize,
                   "mean": t.mean, "sd": t.sd} for t in spec.tasks],
    }
    if spec.sensitive is not None:
        out["sensitive"] = {"column": spec.sensitive.name,
                            "encoding": dict(spec.sensitive.encoding)}
    return out


@dataclass
class Dataset:
    """Immutable-by-convention row store shared across runs.

    `sensitive` uses -1 for missing.  `vocab_sizes` mirrors the resolved
    schema so a model can be sized from the dataset alone.
    """
    dense: np.ndarray
    cat: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    split: str = "train"
    vocab_sizes: tuple = ()
    rejected: int = 0

    def __post_init__(self):
        self.dense = np.ascontiguousarray(self.dense, dtype=np.float64)
        self.cat = np.ascontiguousarray(self.cat, dtype=np.intp)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int8)
        self.sensitive = np.ascontiguousarray(self.sensitive, dtype=np.int8)
        n = self.labels.shape[0]
        if self.dense.shape[0] != n or self.cat.shape[0] != n \
                or self.sensitive.shape[0] != n:
            raise ConfigError("inconsistent row counts across dataset arrays")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise ConfigError("labels must be binary")
        if self.sensitive.size and not np.isin(self.sensitive, (-1, 0, 1)).all():
            raise ConfigError("sensitive values must be in {-1, 0, 1}")
        for j, size in enumerate(self.vocab_sizes):
            if self.cat.shape[0] and self.cat[:, j].max() >= size:
                raise ConfigError(f"categorical column {j} exceeds vocab size")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def num_tasks(self):
        return self.labels.shape[1]

    def take(self, rows, split=None):
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(dense=self.dense[rows], cat=self.cat[rows],
                       labels=self.labels[rows], sensitive=self.sensitive[rows],
                       split=split or self.split, vocab_sizes=self.vocab_sizes)


# Batches are just row views; the alias keeps call sites descriptive.
Batch = Dataset


def _read_rows(csv_path, spec):
    """Yield (line_number, {column: raw cell}) for each data row."""
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file") from None
        missing = [c for c in spec.columns() if c not in header]
        if missing:
            raise SchemaError(f"{csv_path}: missing columns {missing}")
        pos = {c: header.index(c) for c in spec.columns()}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            yield line_no, {c: row[i].strip() if i < len(row) else ""
                            for c, i in pos.items()}


def _parse_float(cell, column, line_no, spec):
    if cell in spec.missing_values:
        return None
    try:
        return float(cell)
    except ValueError:
        raise RowParseError(
            line_no, f"column {column!r}: cannot parse {cell!r} as a number")


def resolve(spec, csv_path):
    """Fit standardization stats and vocabularies on a training CSV.

    Only rows that would survive loading (no missing labels or dense values)
    contribute to the statistics.  Constant dense columns get sd = 1 so the
    transform stays defined.
    """
    sums = np.zeros(len(spec.dense))
    sqsums = np.zeros(len(spec.dense))
    zsums = {t.name: [0.0, 0.0] for t in spec.tasks if t.standardize}
    vocabs = [set() for _ in spec.categorical]
    count = 0

    for line_no, row in _read_rows(csv_path, spec):
        vals = [_parse_float(row[c.name], c.name, line_no, spec)
                for c in spec.dense]
        if any(v is None for v in vals):
            continue
        skip = False
        zvals = {}
        for t in spec.tasks:
            cell = row[t.source]
            if cell in spec.missing_values:
                skip = True
                break
            if t.op != "eq" or t.standardize:
                v = _parse_float(cell, t.source, line_no, spec)
                if v is None:
                    skip = True
                    break
                if t.standardize:
                    zvals[t.name] = v
        if skip:
            continue
        count += 1
        sums += vals
        sqsums += np.square(vals)
        for name, v in zvals.items():
            zsums[name][0] += v
            zsums[name][1] += v * v
        for vocab, c in zip(vocabs, spec.categorical):
            if row[c.name] not in spec.missing_values:
                vocab.add(row[c.name])

    if count == 0:
        raise SchemaError(f"{csv_path}: no usable rows to fit statistics")

    def stats(total, sq):
        mean = total / count
        var = max(sq / count - mean * mean, 0.0)
        sd = np.sqrt(var)
        return float(mean), float(sd if sd > 0 else 1.0)

    dense = tuple(replace(c, mean=m, sd=s) for c, (m, s) in
                  zip(spec.dense, (stats(sums[i], sqsums[i])
                                   for i in range(len(spec.dense)))))
    categorical = tuple(replace(c, vocab=tuple(sorted(v)))
                        for c, v in zip(spec.categorical, vocabs))
    tasks = []
    for t in spec.tasks:
        if t.standardize:
            m, s = stats(*zsums[t.name])
            tasks.append(replace(t, mean=m, sd=s))
        else:
            tasks.append(t)
    return replace(spec, dense=dense, categorical=categorical,
                   tasks=tuple(tasks))


def _derive_label(task, cell, line_no, spec):
    """Apply a task predicate to a raw cell; None means the row is rejected."""
    if cell in spec.missing_values:
        return None
    if task.op == "eq":
        return int(cell == str(task.constant))
    v = _parse_float(cell, task.source, line_no, spec)
    if v is None:
        return None
    if task.standardize:
        v = (v - task.mean) / task.sd
    return int(v > task.constant if task.op == "gt" else v >= task.constant)


def load_dataset(csv_path, spec, split="train"):
    """Load a CSV through a resolved spec into arrays.

    Rows with a missing label source or missing dense value are rejected and
    counted; missing sensitive values become -1 and the row is kept.
    """
    if not spec.resolved:
        raise SchemaError("spec not resolved; call resolve() on the train CSV")
    lookups = [{tok: i + 1 for i, tok in enumerate(c.vocab)}
               for c in spec.categorical]
    sens_map = dict(spec.sensitive.encoding) if spec.sensitive else {}

    dense_rows, cat_rows, label_rows, sens_vals = [], [], [], []
    rejected = 0
    for line_no, row in _read_rows(csv_path, spec):
        vals = [_parse_float(row[c.name], c.name, line_no, spec)
                for c in spec.dense]
        labels = [_derive_label(t, row[t.source], line_no, spec)
                  for t in spec.tasks]
        if any(v is None for v in vals) or any(y is None for y in labels):
            rejected += 1
            continue
        dense_rows.append([(v - c.mean) / c.sd
                           for v, c in zip(vals, spec.dense)])
        cat_rows.append([lookup.get(row[c.name], OOV_INDEX)
                         for lookup, c in zip(lookups, spec.categorical)])
        label_rows.append(labels)
        if spec.sensitive is None:
            sens_vals.append(-1)
        else:
            sens_vals.append(sens_map.get(row[spec.sensitive.name], -1))

    n = len(label_rows)
    return Dataset(
        dense=np.asarray(dense_rows, dtype=np.float64).reshape(n, len(spec.dense)),
        cat=np.asarray(cat_rows, dtype=np.intp).reshape(n, len(spec.categorical)),
        labels=np.asarray(label_rows, dtype=np.int8).reshape(n, spec.num_tasks),
        sensitive=np.asarray(sens_vals, dtype=np.int8),
        split=split, vocab_sizes=spec.vocab_sizes(), rejected=rejected)


def split_random(dataset, fraction, seed):
    """Disjoint train/test split covering every row, deterministic in seed."""
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must be in (0,1), got {fraction}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(n * fraction)
    return (dataset.take(perm[:n_train], split="train"),
            dataset.take(perm[n_train:], split="test"))


def iter_batches(dataset, batch_size, rng=None):
    """Yield consecutive mini-batches, shuffled when an rng is given.

    The final partial batch is retained.  An oversized batch_size degrades
    to a single batch with a warning.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    n = len(dataset)
    if batch_size > n:
        warnings.warn(f"batch_size {batch_size} > dataset size {n}; "
                      "using a single batch")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield dataset.take(order[start:start + batch_size])


def write_csv(dataset, spec, path):
    """Serialize a dataset so that reloading with the same resolved spec
    reproduces labels, sensitive flags, and categorical indices exactly.

    Dense values are de-standardized (float round-trip is near-exact, not
    bit-exact); label source cells are synthesized to re-derive the stored
    labels through the schema predicates.
    """
    if not spec.resolved:
        raise SchemaError("write_csv needs a resolved spec")
    missing = spec.missing_values[0] if spec.missing_values else ""
    inv_sens = {}
    for tok, v in (spec.sensitive.encoding if spec.sensitive else ()):
        inv_sens.setdefault(v, tok)

    def label_cell(task, y):
        if task.op == "eq":
            return str(task.constant) if y else f"not-{task.constant}"
        c = float(task.constant)
        if task.op == "gt":
            z = c + 1.0 if y else c
        else:
            z = c if y else c - 1.0
        if task.standardize:
            z = task.mean + z * task.sd
        return repr(z)

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(spec.columns())
        for i in range(len(dataset)):
            row = [repr(float(dataset.dense[i, j]) * c.sd + c.mean)
                   for j, c in enumerate(spec.dense)]
            for j, c in enumerate(spec.categorical):
                idx = dataset.cat[i, j]
                row.append("__oov__" if idx == OOV_INDEX else c.vocab[idx - 1])
            for t_idx, task in enumerate(spec.tasks):
                row.append(label_cell(task, dataset.labels[i, t_idx]))
            if spec.sensitive is not None:
                s = dataset.sensitive[i]
                row.append(missing if s < 0 else inv_sens[int(s)])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Generative settings for the controlled test-fixture generator.

    Task latents share variance through `label_correlation`; per-group
    per-task intercepts are solved so marginal positive rates match
    `positive_rates[group][task]`.  `group_feature_weight` 0 makes the
    feature distribution identical across groups.
    """
    n: int
    num_tasks: int = 2
    dense_dim: int = 5
    group_fraction: float = 0.5
    positive_rates: tuple = ((0.3, 0.3), (0.3, 0.3))
    label_correlation: float = 0.5
    group_feature_weight: float = 1.0
    feature_noise: float = 0.5
    logit_slope: float = 2.5
    sensitive_missing_rate: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.num_tasks < 1 or self.dense_dim < 1:
            raise ConfigError("num_tasks and dense_dim must be >= 1")
        rates = np.asarray(self.positive_rates, dtype=float)
        if rates.shape != (2, self.num_tasks):
            raise ConfigError("positive_rates must be shaped (2, num_tasks)")
        if ((rates < 0) | (rates > 1)).any():
            raise ConfigError("positive rates must lie in [0, 1]")
        for name in ("group_fraction", "label_correlation",
                     "sensitive_missing_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "positive_rates",
                           tuple(tuple(r) for r in rates))


_HERM_X, _HERM_W = np.polynomial.hermite.hermgauss(80)


def _solve_intercept(slope, rate):
    """c such that E[sigmoid(slope * U + c)] = rate for U ~ N(0, 1)."""
    def expected(c):
        z = slope * np.sqrt(2.0) * _HERM_X + c
        return float(np.sum(_HERM_W / (1.0 + np.exp(-z))) / np.sqrt(np.pi))

    lo, hi = -80.0, 80.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if expected(mid) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def synth_generate(spec, seed):
    """Draw a synthetic Dataset from the generative model in SynthSpec."""
    rng = np.random.default_rng(seed)
    n, num_tasks = spec.n, spec.num_tasks
    rates = np.asarray(spec.positive_rates)

    group = (rng.random(n) < spec.group_fraction).astype(np.int8)
    shared = rng.standard_normal(n)
    own = rng.standard_normal((n, num_tasks))
    rho = spec.label_correlation
    latent = (np.sqrt(rho) * shared[:, None]
              + np.sqrt(1.0 - rho) * own)

    prob = np.empty((n, num_tasks))
    for g in (0, 1):
        mask = group == g
        for t in range(num_tasks):
            rate = rates[g, t]
            if rate <= 0.0:
                prob[mask, t] = 0.0
            elif rate >= 1.0:
                prob[mask, t] = 1.0
            else:
                c = _solve_intercept(spec.logit_slope, rate)
                prob[mask, t] = 1.0 / (
                    1.0 + np.exp(-(spec.logit_slope * latent[mask, t] + c)))
    labels = (rng.random((n, num_tasks)) < prob).astype(np.int8)

    dense = np.empty((n, spec.dense_dim))
    dense[:, 0] = (spec.group_feature_weight * (2.0 * group - 1.0)
                   + spec.feature_noise * rng.standard_normal(n))
    for j in range(1, spec.dense_dim):
        dense[:, j] = (latent[:, (j - 1) % num_tasks]
                       + spec.feature_noise * rng.standard_normal(n))

    sensitive = group.copy()
    if spec.sensitive_missing_rate > 0:
        sensitive[rng.random(n) < spec.sensitive_missing_rate] = -1

    return Dataset(dense=dense, cat=np.empty((n, 0), dtype=np.intp),
                   labels=labels, sensitive=sensitive, split="train")
