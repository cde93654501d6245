"""Training-step semantics: Adagrad arithmetic, the two-ledger routing of
mtaf, bit-exact agreement contracts, and end-to-end learnability."""

import numpy as np
import pytest

import fairmtl.autodiff as ad
from fairmtl.data import Dataset
from fairmtl.exceptions import ConfigError, ShapeError, TrainingDiverged
from fairmtl.losses import cross_entropy, decompose_fairness, fairness_loss, \
    subset_select
from fairmtl.model import ArchConfig, build_model, forward
from fairmtl.trainer import (ADAGRAD_EPS, TrainConfig, adagrad_update, train,
                             train_step)


def small_arch(num_tasks=2):
    return ArchConfig(num_tasks=num_tasks, shared_layer_sizes=(3,),
                      head_layer_sizes=(2,), embedding_dim=2)


def hand_batch():
    """Every label-defined subset of both tasks spans both sensitive groups,
    so no fairness term degenerates to a constant."""
    rng = np.random.default_rng(42)
    return Dataset(dense=rng.standard_normal((8, 3)),
                   cat=np.empty((8, 0), dtype=np.intp),
                   labels=np.array([[0, 0], [0, 0], [0, 1], [0, 1],
                                    [1, 0], [1, 0], [1, 1], [1, 1]]),
                   sensitive=np.array([0, 1, 0, 1, 0, 1, 0, 1]))


def snapshot(model):
    return {p.name: p.value.copy() for p in model.all_params}


# --- adagrad ---------------------------------------------------------------

def test_adagrad_zero_grad_noop():
    p = ad.Param(np.array([[1.0, -2.0]]), name="p")
    adagrad_update(p, np.zeros((1, 2)), lr=0.5)
    np.testing.assert_array_equal(p.value, [[1.0, -2.0]])
    np.testing.assert_array_equal(p.adagrad_acc, [[0.0, 0.0]])


def test_adagrad_first_step_value():
    p = ad.Param(np.array([[1.0]]), name="p")
    adagrad_update(p, np.array([[2.0]]), lr=0.1)
    expected = 1.0 - 0.1 * 2.0 / (2.0 + ADAGRAD_EPS)
    assert p.value[0, 0] == pytest.approx(expected, rel=1e-15)
    assert p.adagrad_acc[0, 0] == 4.0


def test_adagrad_two_identical_steps():
    p = ad.Param(np.array([[0.0]]), name="p")
    g = np.array([[1.0]])
    adagrad_update(p, g, lr=1.0)
    first = -1.0 / (1.0 + ADAGRAD_EPS)
    assert p.value[0, 0] == pytest.approx(first, rel=1e-15)
    adagrad_update(p, g, lr=1.0)
    second = first - 1.0 / (np.sqrt(2.0) + ADAGRAD_EPS)
    assert p.value[0, 0] == pytest.approx(second, rel=1e-15)


def test_adagrad_accumulator_monotone():
    rng = np.random.default_rng(0)
    p = ad.Param(rng.standard_normal((3, 2)), name="p")
    prev = p.adagrad_acc.copy()
    for _ in range(20):
        adagrad_update(p, rng.standard_normal((3, 2)), lr=0.1)
        assert (p.adagrad_acc >= prev).all()
        prev = p.adagrad_acc.copy()


def test_adagrad_shape_mismatch():
    p = ad.Param(np.zeros((2, 2)), name="p")
    with pytest.raises(ShapeError):
        adagrad_update(p, np.zeros((2, 3)), lr=0.1)


# --- config ----------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(method="sgd", task_weights=(1.0,))
    with pytest.raises(ConfigError):
        TrainConfig(method="mtaf", task_weights=(1.0,),
                    fairness_weights=(1.0, 2.0))
    with pytest.raises(ConfigError):
        TrainConfig(method="mtaf", task_weights=(1.0,),
                    head_shared_ratios=(0.0,))
    with pytest.raises(ConfigError):
        TrainConfig(method="vanilla", task_weights=(-0.1,))
    with pytest.raises(ConfigError):
        TrainConfig(method="vanilla", task_weights=(1.0,), learning_rate=0.0)


def test_config_roundtrip():
    cfg = TrainConfig(method="mtaf", task_weights=(0.3, 0.7),
                      fairness_weights=(1.0, 2.0), head_shared_ratios=(2.0, 0.5),
                      fairness_kind="mmd", fairness_target="equalized_odds",
                      learning_rate=0.02, epochs=3, batch_size=16, seed=9)
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg


# --- step semantics --------------------------------------------------------

def make_pair(seed=5):
    a = build_model(small_arch(), dense_count=3, seed=seed)
    b = build_model(small_arch(), dense_count=3, seed=seed)
    return a, b


def test_mtaf_lambda_zero_equals_vanilla_bitwise():
    batch = hand_batch()
    m_van, m_mtaf = make_pair()
    base = dict(task_weights=(0.6, 0.4), learning_rate=0.05)
    train_step(m_van, batch, TrainConfig(method="vanilla", **base))
    train_step(m_mtaf, batch, TrainConfig(
        method="mtaf", fairness_weights=(0.0, 0.0),
        head_shared_ratios=(3.0, 0.2), **base))
    for pv, pm in zip(m_van.all_params, m_mtaf.all_params):
        np.testing.assert_array_equal(pv.value, pm.value)


def test_baseline_lambda_zero_equals_vanilla_bitwise():
    batch = hand_batch()
    m_van, m_base = make_pair()
    base = dict(task_weights=(0.6, 0.4), learning_rate=0.05)
    train_step(m_van, batch, TrainConfig(method="vanilla", **base))
    train_step(m_base, batch, TrainConfig(
        method="baseline", fairness_weights=(0.0, 0.0), **base))
    for pv, pb in zip(m_van.all_params, m_base.all_params):
        np.testing.assert_array_equal(pv.value, pb.value)


def test_mtaf_empty_exclusive_heads_match_vanilla():
    """Identical task labels empty every exclusive set, so head updates
    reduce to vanilla while the shared bottom still sees fairness."""
    rng = np.random.default_rng(1)
    y = np.array([0, 1, 0, 1])
    batch = Dataset(dense=rng.standard_normal((4, 3)),
                    cat=np.empty((4, 0), dtype=np.intp),
                    labels=np.stack([y, y], axis=1),
                    sensitive=np.array([0, 1, 1, 0]))
    # wide enough that no row has every relu unit dead (a dead row pins its
    # probability to exactly 0.5 and zeroes the fairness signal)
    arch = ArchConfig(num_tasks=2, shared_layer_sizes=(6,),
                      head_layer_sizes=(4,))
    m_van = build_model(arch, dense_count=3, seed=5)
    m_mtaf = build_model(arch, dense_count=3, seed=5)
    base = dict(task_weights=(0.5, 0.5), learning_rate=0.05)
    train_step(m_van, batch, TrainConfig(method="vanilla", **base))
    train_step(m_mtaf, batch, TrainConfig(
        method="mtaf", fairness_weights=(2.0, 2.0),
        fairness_kind="soft_fpr_gap", **base))
    for t in range(2):
        for pv, pm in zip(m_van.head_params(t), m_mtaf.head_params(t)):
            np.testing.assert_array_equal(pv.value, pm.value)
    assert any((pv.value != pm.value).any()
               for pv, pm in zip(m_van.shared_params, m_mtaf.shared_params))


def test_mtaf_single_task_head_matches_baseline_bitwise():
    rng = np.random.default_rng(2)
    batch = Dataset(dense=rng.standard_normal((6, 3)),
                    cat=np.empty((6, 0), dtype=np.intp),
                    labels=np.array([[0], [0], [1], [0], [1], [0]]),
                    sensitive=np.array([0, 1, 0, 1, 0, 1]))
    arch = small_arch(num_tasks=1)
    m_base = build_model(arch, dense_count=3, seed=3)
    m_mtaf = build_model(arch, dense_count=3, seed=3)
    shared_cfg = dict(task_weights=(1.0,), fairness_weights=(2.0,),
                      fairness_kind="mmd", learning_rate=0.05)
    train_step(m_base, batch, TrainConfig(method="baseline", **shared_cfg))
    train_step(m_mtaf, batch, TrainConfig(
        method="mtaf", head_shared_ratios=(1.0,), **shared_cfg))
    for pb, pm in zip(m_base.head_params(0), m_mtaf.head_params(0)):
        np.testing.assert_array_equal(pb.value, pm.value)
    # shared parameters intentionally differ: mtaf's shared fairness part is
    # identically zero for a single task
    assert any((pb.value != pm.value).any()
               for pb, pm in zip(m_base.shared_params, m_mtaf.shared_params))


MTAF_CFG = dict(method="mtaf", task_weights=(0.6, 0.4),
                fairness_weights=(1.5, 0.8), head_shared_ratios=(2.0, 0.5),
                fairness_kind="soft_fpr_gap",
                fairness_target="equal_opportunity_fpr", learning_rate=0.05)


def test_mtaf_step_matches_per_group_fd_oracle():
    """Finite differences of the exact objective Algorithm-style routing
    assigns to each parameter group must explain every applied delta."""
    batch = hand_batch()
    cfg = TrainConfig(**MTAF_CFG)
    stepped = build_model(small_arch(), dense_count=3, seed=7)
    probe = build_model(small_arch(), dense_count=3, seed=7)
    before = snapshot(stepped)
    train_step(stepped, batch, cfg)

    def head_objective(t):
        outs = forward(probe, batch.dense)
        acc = cross_entropy(outs[t].prob, batch.labels[:, t])
        f_head, _ = decompose_fairness(
            cfg.fairness_kind, cfg.fairness_target, t, batch.labels,
            outs[t].prob, batch.sensitive)
        w, lam, r = (cfg.task_weights[t], cfg.fairness_weights[t],
                     cfg.head_shared_ratios[t])
        return w * (acc.value[0, 0] + lam * r * f_head.value[0, 0])

    def shared_objective():
        outs = forward(probe, batch.dense)
        total = 0.0
        for t in range(2):
            acc = cross_entropy(outs[t].prob, batch.labels[:, t])
            _, f_shared = decompose_fairness(
                cfg.fairness_kind, cfg.fairness_target, t, batch.labels,
                outs[t].prob, batch.sensitive)
            total += cfg.task_weights[t] * (
                acc.value[0, 0]
                + cfg.fairness_weights[t] * f_shared.value[0, 0])
        return total

    def fd(p, objective):
        g = np.zeros_like(p.value)
        it = np.nditer(p.value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p.value[idx]
            p.value[idx] = orig + 1e-5
            hi = objective()
            p.value[idx] = orig - 1e-5
            lo = objective()
            p.value[idx] = orig
            g[idx] = (hi - lo) / 2e-5
            it.iternext()
        return g

    checked = 0
    groups = [(p, lambda t=t: head_objective(t))
              for t in range(2) for p in probe.head_params(t)]
    groups += [(p, shared_objective) for p in probe.shared_params]
    by_name = {p.name: p for p in stepped.all_params}
    for probe_param, objective in groups:
        g = fd(probe_param, objective)
        applied = by_name[probe_param.name].value - before[probe_param.name]
        expected = -cfg.learning_rate * g / (np.abs(g) + ADAGRAD_EPS)
        np.testing.assert_allclose(
            applied, expected, rtol=1e-3, atol=2e-6,
            err_msg=f"delta mismatch for {probe_param.name}")
        checked += 1
    assert checked == len(stepped.all_params)


def test_routing_exclusivity_lambda_perturbation():
    batch = hand_batch()
    m_a = build_model(small_arch(), dense_count=3, seed=11)
    m_b = build_model(small_arch(), dense_count=3, seed=11)
    cfg_a = TrainConfig(**MTAF_CFG)
    cfg_b = TrainConfig(**{**MTAF_CFG, "fairness_weights": (1.5, 3.7)})
    train_step(m_a, batch, cfg_a)
    train_step(m_b, batch, cfg_b)
    # task-0 head untouched by the task-1 lambda change
    for pa, pb in zip(m_a.head_params(0), m_b.head_params(0)):
        np.testing.assert_array_equal(pa.value, pb.value)
    assert any((pa.value != pb.value).any()
               for pa, pb in zip(m_a.head_params(1), m_b.head_params(1)))


def test_routing_exclusivity_label_perturbation():
    """Flipping a task-1 label on a row outside N_0 and its exclusive sets
    cannot change the applied task-0 head update."""
    batch = hand_batch()
    labels2 = batch.labels.copy()
    # row 4 has y0=1 so it sits outside N_0; flip its task-1 label
    assert labels2[4, 0] == 1
    labels2[4, 1] = 1 - labels2[4, 1]
    perturbed = Dataset(dense=batch.dense, cat=batch.cat, labels=labels2,
                        sensitive=batch.sensitive)
    m_a = build_model(small_arch(), dense_count=3, seed=13)
    m_b = build_model(small_arch(), dense_count=3, seed=13)
    cfg = TrainConfig(**MTAF_CFG)
    train_step(m_a, batch, cfg)
    train_step(m_b, perturbed, cfg)
    for pa, pb in zip(m_a.head_params(0), m_b.head_params(0)):
        np.testing.assert_array_equal(pa.value, pb.value)


def test_step_aborts_on_nonfinite():
    # relu would zero out a NaN feature, so use a purely linear model
    batch = hand_batch()
    bad = Dataset(dense=batch.dense.copy(), cat=batch.cat,
                  labels=batch.labels, sensitive=batch.sensitive)
    bad.dense[0, 0] = np.nan
    arch = ArchConfig(num_tasks=2, shared_layer_sizes=(),
                      head_layer_sizes=())
    model = build_model(arch, dense_count=3, seed=0)
    with pytest.raises(TrainingDiverged, match="accuracy loss"):
        train_step(model, bad, TrainConfig(method="vanilla",
                                           task_weights=(1.0, 1.0)))


def test_step_rejects_empty_batch():
    model = build_model(small_arch(), dense_count=3, seed=0)
    empty = hand_batch().take(np.array([], dtype=np.intp))
    with pytest.raises(ConfigError):
        train_step(model, empty, TrainConfig(method="vanilla",
                                             task_weights=(1.0, 1.0)))


# --- full training loop ----------------------------------------------------

def separable_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, 2))
    labels = (u > 0).astype(np.int8)
    dense = np.column_stack([
        u[:, 0] + 0.02 * rng.standard_normal(n),
        u[:, 1] + 0.02 * rng.standard_normal(n),
        rng.standard_normal(n),
    ])
    return Dataset(dense=dense, cat=np.empty((n, 0), dtype=np.intp),
                   labels=labels, sensitive=rng.integers(0, 2, n).astype(np.int8))


def logistic_regression_error(x, y, iters=400, lr=0.5):
    """Plain batch-GD logistic regression, the separability oracle."""
    xb = np.column_stack([x, np.ones(len(x))])
    w = np.zeros(xb.shape[1])
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(xb @ w)))
        w -= lr * xb.T @ (p - y) / len(y)
    p = 1.0 / (1.0 + np.exp(-(xb @ w)))
    return np.mean((p >= 0.5) != y)


def test_train_learns_separable_tasks():
    data = separable_dataset()
    for t in range(2):
        assert logistic_regression_error(
            data.dense, data.labels[:, t].astype(float)) < 0.05
    arch = ArchConfig(num_tasks=2, shared_layer_sizes=(8,),
                      head_layer_sizes=(4,))
    cfg = TrainConfig(method="vanilla", task_weights=(1.0, 1.0),
                      learning_rate=0.1, epochs=50, batch_size=64, seed=0)
    run = train(data, arch, cfg)
    outs = forward(run.model, data.dense)
    for t in range(2):
        err = np.mean((outs[t].prob.value[:, 0] >= 0.5) != data.labels[:, t])
        assert err < 0.05, f"task {t} training error {err}"
    assert run.history.shape == (50, 2)
    assert run.seconds >= 0
    # loss should not get worse over training
    assert run.history[-1].sum() < run.history[0].sum()


def test_train_deterministic():
    data = separable_dataset(n=60, seed=4)
    arch = small_arch()
    cfg = TrainConfig(method="mtaf", task_weights=(0.5, 0.5),
                      fairness_weights=(1.0, 1.0), fairness_kind="mmd",
                      learning_rate=0.05, epochs=3, batch_size=16, seed=21)
    run1 = train(data, arch, cfg)
    run2 = train(data, arch, cfg)
    for p1, p2 in zip(run1.model.all_params, run2.model.all_params):
        np.testing.assert_array_equal(p1.value, p2.value)
    np.testing.assert_array_equal(run1.history, run2.history)


def test_train_single_batch_per_epoch():
    data = separable_dataset(n=30, seed=5)
    cfg = TrainConfig(method="vanilla", task_weights=(1.0, 1.0),
                      learning_rate=0.05, epochs=2, batch_size=64, seed=0)
    run = train(data, small_arch(), cfg)
    assert run.history.shape == (2, 2)


def test_train_task_count_mismatch():
    data = separable_dataset(n=20)
    cfg = TrainConfig(method="vanilla", task_weights=(1.0,), epochs=1)
    with pytest.raises(ConfigError):
        train(data, small_arch(num_tasks=1), TrainConfig(
            method="vanilla", task_weights=(1.0, 1.0)))
    with pytest.raises(ConfigError):
        train(data, small_arch(), cfg)
