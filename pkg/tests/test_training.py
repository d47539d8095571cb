import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hinimp import autodiff as ad
from hinimp.model import ImportanceModel, ModelConfig
from hinimp.training import (Fold, TrainConfig, TrainingDiverged, forward_transform, inverse_transform,
                             l2_regularizer, make_folds, margin_ranking_loss, mse_loss, rows_to_csv,
                             sample_triplets, train)

from _hin import six_node_graph, tiny_bank

SMALL = dict(heads=2, head_dim=4, attention_hidden=8, mlp_hidden=8)


# ---------------------------------------------------------------- losses

def test_mse_averages_per_type():
    preds = ad.Tensor(np.array([1.0, 2.0, 3.0, 0.0]))
    labels = [0.0, 0.0, 0.0, 2.0]
    types = [0, 0, 0, 1]
    want = 0.5 * ((1 + 4 + 9) / 3) + 0.5 * 4
    assert mse_loss(preds, labels, types).item() == pytest.approx(want)
    with pytest.raises(ValueError):
        mse_loss(ad.Tensor(np.zeros(0)), [], [])


def test_l2_and_margin_values():
    a = ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    b = ad.Tensor(np.array([[3.0]]), requires_grad=True)
    assert l2_regularizer({"a": a, "b": b}, 0.5).item() == pytest.approx(0.5 * 14)
    with pytest.raises(ValueError):
        l2_regularizer([a], -1.0)
    gi, gp, gm = np.array([0.0, 5.0]), np.array([1.0, 2.0]), np.array([3.0, 2.5])
    # hinge(m + gm - gp): [max(0, 1 + 2), max(0, 1 + 0.5)]
    assert margin_ranking_loss(gi, gp, gm, 1.0).item() == pytest.approx((3 + 1.5) / 2)
    assert margin_ranking_loss(gi, np.array([9.0, 9.0]), gm, 1.0).item() == 0.0


@given(st.integers(0, 10_000))
def test_triplets_respect_gap_filter(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=30)
    types = rng.integers(0, 2, size=30)
    trip = sample_triplets(y, 50, seed, types)
    assert len(trip) <= 50
    for i, p, m in trip:
        assert len({i, p, m}) == 3
        assert types[i] == types[p] == types[m]
        assert abs(y[p] - y[i]) > abs(y[m] - y[i])
    np.testing.assert_array_equal(trip, sample_triplets(y, 50, seed, types))


def test_triplet_shortfall_and_guard(caplog):
    # identical labels: no triplet can pass the strict gap filter
    assert len(sample_triplets(np.ones(5), 4, 0)) == 0
    assert "gap filter" in caplog.text
    with pytest.raises(ValueError):
        sample_triplets([1.0, 2.0], 3, 0)


# ---------------------------------------------------------------- folds

@given(st.integers(0, 10_000), st.lists(st.integers(5, 40), min_size=1, max_size=3))
def test_fold_counts_are_exact(seed, sizes):
    types = np.repeat(np.arange(len(sizes)), sizes)
    nodes = np.random.default_rng(seed).permutation(1000)[:len(types)]
    plan = make_folds(nodes, types, seed)
    tests = [set(f.test.tolist()) for f in plan.folds]
    assert set().union(*tests) == set(nodes.tolist())
    assert sum(len(t) for t in tests) == len(nodes)
    for f in plan.folds:
        tr, va, te = set(f.train.tolist()), set(f.val.tolist()), set(f.test.tolist())
        assert not (tr & va) and not (tr & te) and not (va & te)
        assert tr | va | te == set(nodes.tolist())
    for t, n in enumerate(sizes):
        member = set(nodes[types == t].tolist())
        for f in plan.folds:
            n_test = len(member & set(f.test.tolist()))
            assert n_test in (n // 5, -(-n // 5))
            assert len(member & set(f.val.tolist())) == math.floor(0.15 * (n - n_test))


def test_folds_need_five_per_type():
    with pytest.raises(ValueError):
        make_folds(np.arange(4), np.zeros(4), 0)


def test_transforms():
    y = np.array([0.0, 1.5, 10.0])
    np.testing.assert_allclose(inverse_transform(forward_transform(y, "log1p"), "log1p"), y)
    np.testing.assert_array_equal(forward_transform(y, "identity"), y)
    with pytest.raises(ValueError):
        forward_transform([-1.0], "log1p")
    with pytest.raises(ValueError):
        TrainConfig(target_transform="sqrt")
    with pytest.raises(ValueError):
        TrainConfig(rank_weight=1.0, margin=0.0)


# ---------------------------------------------------------------- loop

@pytest.fixture(scope="module")
def fixture6():
    g = six_node_graph()
    return g, tiny_bank(g)


def fold6():
    return Fold(train=np.array([0, 2, 3]), val=np.array([1, 4]), test=np.array([], dtype=np.int64))


def test_zero_learning_rate_keeps_parameters(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    before = {k: p.data.copy() for k, p in m.parameters().items()}
    r = train(m, fold6(), TrainConfig(epochs=5, lr=0.0))
    for k, p in m.parameters().items():
        np.testing.assert_array_equal(p.data, before[k])
    assert len(set(r.losses)) == 1


def test_training_reduces_loss_and_is_deterministic(fixture6):
    g, bank = fixture6
    runs = []
    for _ in range(2):
        m = ImportanceModel(g, bank, ModelConfig(**SMALL))
        # all three papers in train so same-type triplets exist
        fold = Fold(train=np.array([0, 2, 3, 4]), val=np.array([1]), test=np.array([], dtype=np.int64))
        r = train(m, fold, TrainConfig(epochs=40, lr=1e-2, rank_weight=0.5, triplets=8))
        runs.append((r, m.predict()))
    (r1, p1), (r2, p2) = runs
    assert r1.losses[-1] < r1.losses[0]
    assert r1.log_csv() == r2.log_csv()
    np.testing.assert_array_equal(p1, p2)
    assert r1.log[0]["epoch_ms"] is None


def test_best_parameters_are_restored(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    fold = fold6()
    r = train(m, fold, TrainConfig(epochs=30, lr=1e-2))
    val_rows = [row for row in r.log if row["split"] == "val"]
    assert r.best_val_mae == pytest.approx(min(row["mae"] for row in val_rows))
    assert val_rows[r.best_epoch - 1]["mae"] == r.best_val_mae
    got = float(np.abs(m.predict(fold.val) - g.labels[fold.val]).mean())
    assert got == pytest.approx(r.best_val_mae, rel=1e-12)


def test_early_stopping(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    r = train(m, fold6(), TrainConfig(epochs=500, lr=0.0, patience=3))
    assert r.best_epoch == 1 and r.epochs_run == 4


def test_log1p_metrics_are_in_label_space(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    fold = fold6()
    scores = m.predict(fold.train)
    r = train(m, fold, TrainConfig(epochs=1, lr=0.0, target_transform="log1p"))
    want = float(np.abs(np.expm1(scores) - g.labels[fold.train]).mean())
    assert r.log[0]["split"] == "train" and r.log[0]["mae"] == pytest.approx(want, rel=1e-12)


def test_divergence_raises(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    m.head["head.lambda"].data[:] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(m, fold6(), TrainConfig(epochs=3))
    assert info.value.epoch == 1


def test_log_csv_blank_for_missing_values():
    text = rows_to_csv([dict(epoch=1, fold=0, split="val", mae=0.5, loss=None, spearman=math.nan)])
    header, row = text.splitlines()
    assert header.startswith("epoch,fold,split,mae")
    assert row == "1,0,val,0.5,,,,,,"
