"""Accuracy and fairness loss graph builders.

The fairness losses operate on label-defined row subsets (negatives,
positives, and their inter-task exclusive variants) and only on rows whose
sensitive attribute is present.  `decompose_fairness` splits a task's
fairness loss into a head part (rows no other task's loss can reach) and a
shared remainder, defined as a graph-level difference because these losses
are not additive over subsets.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .backend import kernels
from .exceptions import ConfigError, ContractError, ShapeError

FAIRNESS_KINDS = ("correlation", "mmd", "soft_fpr_gap")
FAIRNESS_TARGETS = ("equal_opportunity_fpr", "equal_opportunity_tpr",
                    "equalized_odds")

SUBSET_KINDS = ("negatives", "positives", "exclusive_negatives",
                "exclusive_positives")


@dataclass(frozen=True)
class FairnessLossKind:
    kind: str
    mmd_bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in FAIRNESS_KINDS:
            raise ConfigError(f"unknown fairness loss kind {self.kind!r}")
        if self.mmd_bandwidth <= 0:
            raise ConfigError("mmd_bandwidth must be > 0")


def as_loss_kind(kind):
    if isinstance(kind, FairnessLossKind):
        return kind
    return FairnessLossKind(kind=kind)


@dataclass(frozen=True)
class ExampleSubset:
    """Unique, in-bounds row indices into a batch, tagged with their origin."""
    indices: tuple
    tag: str

    def __len__(self):
        return len(self.indices)


def cross_entropy(prob, labels):
    """Mean binary cross-entropy of a probability column against 0/1 labels.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logs; the
    gradient is zero where the clamp is active.
    """
    y = np.ascontiguousarray(labels, dtype=np.float64).reshape(-1, 1)
    if prob.shape != y.shape:
        raise ShapeError(f"cross_entropy: prob {prob.shape} vs labels {y.shape}")
    if prob.shape[0] == 0:
        raise ContractError("cross_entropy on an empty batch")
    value = kernels.xent_fwd(prob.value, y)
    out = ad.Tensor(np.array([[value]]), (prob,))

    def rule(g):
        kernels.xent_bwd(prob.value, y, float(g[0, 0]), prob.grad)
    out._rule = rule
    return out


def subset_select(labels, t, which):
    """Label-defined row subset for task t (0-based).

    exclusive_negatives(t) is the set of rows negative on t and positive on
    every other task; for T = 1 the intersection over no other tasks is the
    whole batch, so the exclusive set equals all of N_t.  exclusive_positives
    mirrors this on the positive side.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"labels must be (n, T), got {labels.shape}")
    n, num_tasks = labels.shape
    if not 0 <= t < num_tasks:
        raise ConfigError(f"task index {t} out of range for T={num_tasks}")
    if which not in SUBSET_KINDS:
        raise ConfigError(f"unknown subset kind {which!r}")

    if which in ("negatives", "exclusive_negatives"):
        mask = labels[:, t] == 0
    else:
        mask = labels[:, t] == 1
    if which == "exclusive_negatives":
        for k in range(num_tasks):
            if k != t:
                mask = mask & (labels[:, k] == 1)
    elif which == "exclusive_positives":
        for k in range(num_tasks):
            if k != t:
                mask = mask & (labels[:, k] == 0)
    return ExampleSubset(indices=tuple(np.flatnonzero(mask)),
                         tag=f"{which}[{t}]")


def _zero():
    return ad.constant(np.zeros((1, 1)))


def fairness_loss(kind, prob, sensitive, subset):
    """Scalar fairness loss node over the subset rows with known sensitive.

    Degenerate effective subsets (a group empty; fewer than two rows or zero
    variance for correlation) contribute a constant zero so mini-batch sweeps
    stay defined.
    """
    kind = as_loss_kind(kind)
    idx = np.asarray(subset.indices if isinstance(subset, ExampleSubset)
                     else subset, dtype=np.intp)
    sens = np.asarray(sensitive)
    if sens.ndim != 1 or sens.shape[0] != prob.shape[0]:
        raise ShapeError("sensitive must be a length-n vector")
    if prob.shape[1] != 1:
        raise ShapeError("prob must be a single column")
    idx = idx[sens[idx] >= 0]
    a = sens[idx].astype(np.float64)

    if kind.kind == "correlation":
        if idx.size < 2:
            return _zero()
        p_vals = prob.value[idx, 0]
        ac = a - a.mean()
        var_a = float(np.mean(ac * ac))
        if var_a == 0.0 or float(np.var(p_vals)) == 0.0:
            return _zero()
        pres = ad.gather_rows(prob, idx)
        centered = ad.add_bias(pres, ad.scale(ad.mean_rows(pres), -1.0))
        ac_node = ad.constant(ac.reshape(-1, 1))
        cov = ad.mean_all(ad.mul(centered, ac_node))
        var_p = ad.mean_all(ad.mul(centered, centered))
        corr = ad.scale(ad.mul(cov, ad.powc(var_p, -0.5)), 1.0 / np.sqrt(var_a))
        return ad.absval(corr)

    g0 = idx[a == 0]
    g1 = idx[a == 1]
    if g0.size == 0 or g1.size == 0:
        return _zero()

    if kind.kind == "soft_fpr_gap":
        m0 = ad.mean_rows(ad.gather_rows(prob, g0))
        m1 = ad.mean_rows(ad.gather_rows(prob, g1))
        return ad.absval(ad.sub(m0, m1))

    # mmd: biased squared estimator, Gaussian kernel on the probability column
    p0 = ad.gather_rows(prob, g0)
    p1 = ad.gather_rows(prob, g1)
    bw = kind.mmd_bandwidth
    k00 = ad.mean_all(ad.gauss_kernel(p0, p0, bw))
    k11 = ad.mean_all(ad.gauss_kernel(p1, p1, bw))
    k01 = ad.mean_all(ad.gauss_kernel(p0, p1, bw))
    return ad.add(ad.add(k00, k11), ad.scale(k01, -2.0))


def decompose_fairness(kind, target, t, labels, prob, sensitive):
    """Split task t's fairness loss into (F_head, F_shared).

    F_head is the loss on rows only task t's loss can touch (exclusive
    negatives, and exclusive positives for the tpr/odds targets); F_shared is
    the loss on the full negative (positive) set minus F_head, built as a
    subtraction of loss nodes.  When the exclusive set covers the full set
    (T = 1) the shared part is identically zero.
    """
    if target not in FAIRNESS_TARGETS:
        raise ConfigError(f"unknown fairness target {target!r}")

    def side(full_kind, excl_kind):
        full_set = subset_select(labels, t, full_kind)
        excl_set = subset_select(labels, t, excl_kind)
        head = fairness_loss(kind, prob, sensitive, excl_set)
        if excl_set.indices == full_set.indices:
            return head, _zero()
        full = fairness_loss(kind, prob, sensitive, full_set)
        return head, ad.sub(full, head)

    if target == "equal_opportunity_fpr":
        return side("negatives", "exclusive_negatives")
    if target == "equal_opportunity_tpr":
        return side("positives", "exclusive_positives")

    head_n, shared_n = side("negatives", "exclusive_negatives")
    head_p, shared_p = side("positives", "exclusive_positives")
    return ad.add(head_n, head_p), ad.add(shared_n, shared_p)
