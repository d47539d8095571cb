"""Losses, cross-validation folds, triplet sampling and the training loop."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .metrics import evaluate_type, format_value

logger = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "fold", "split", "mae", "rmse", "nrmse", "ndcg", "spearman", "loss", "epoch_ms")
TRANSFORMS = ("identity", "log1p")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, detail: str):
        super().__init__(f"epoch {epoch}: {detail}")
        self.epoch = epoch


# ---------------------------------------------------------------- losses

def mse_loss(preds: ad.Tensor, labels, type_of) -> ad.Tensor:
    """Mean over node types of the per-type mean squared error."""
    labels = np.asarray(labels, dtype=np.float64)
    type_of = np.asarray(type_of)
    types = np.unique(type_of)
    if len(types) == 0:
        raise ValueError("no labeled node types to score")
    # one weighted sum: each node carries 1 / (|types| * |its type|)
    counts = {t: int((type_of == t).sum()) for t in types}
    w = np.array([1.0 / (len(types) * counts[t]) for t in type_of])
    diff = preds - ad.Tensor(labels)
    return ad.sum(ad.square(diff) * ad.Tensor(w))


def l2_regularizer(params, mu: float) -> ad.Tensor:
    """``mu * sum_p ||p||^2`` over the given trainable tensors."""
    if mu < 0:
        raise ValueError("L2 coefficient must be non-negative")
    params = list(params.values()) if isinstance(params, dict) else list(params)
    total = ad.Tensor(0.0)
    for p in params:
        total = total + ad.sum(ad.square(p))
    return ad.scale(total, mu)


def margin_ranking_loss(g_i, g_plus, g_minus, margin: float) -> ad.Tensor:
    """Mean of ``max(0, m + (g_i - g_+) - (g_i - g_-))``; ``g_i`` cancels."""
    g_i, g_plus, g_minus = (x if isinstance(x, ad.Tensor) else ad.Tensor(x) for x in (g_i, g_plus, g_minus))
    hinge = ad.relu(ad.Tensor(float(margin)) + (g_i - g_plus) - (g_i - g_minus))
    return ad.mean(hinge)


def sample_triplets(labels, count: int, seed: int, types=None) -> np.ndarray:
    """Same-type triplets ``(i, +, -)`` with ``|y+ - yi| > |y- - yi|`` (positions into ``labels``).

    Candidates are drawn uniformly; after 100x oversampling the shortfall is
    accepted with a warning.
    """
    y = np.asarray(labels, dtype=np.float64)
    types = np.zeros(len(y), dtype=np.int64) if types is None else np.asarray(types)
    groups = [np.flatnonzero(types == t) for t in np.unique(types)]
    groups = [grp for grp in groups if len(grp) >= 3]
    if not groups:
        raise ValueError("triplet sampling needs at least 3 labeled nodes of one type")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7219]))
    sizes = np.array([len(grp) for grp in groups], dtype=np.float64)
    kept, drawn = [], 0
    budget = 100 * max(count, 1)
    while sum(len(k) for k in kept) < count and drawn < budget:
        n = min(max(count, 64), budget - drawn)
        drawn += n
        which = rng.choice(len(groups), size=n, p=sizes / sizes.sum())
        trip = np.empty((n, 3), dtype=np.int64)
        for gi, grp in enumerate(groups):
            sel = which == gi
            trip[sel] = grp[rng.integers(0, len(grp), size=(int(sel.sum()), 3))]
        distinct = (trip[:, 0] != trip[:, 1]) & (trip[:, 0] != trip[:, 2]) & (trip[:, 1] != trip[:, 2])
        ok = distinct & (np.abs(y[trip[:, 1]] - y[trip[:, 0]]) > np.abs(y[trip[:, 2]] - y[trip[:, 0]]))
        kept.append(trip[ok])
    out = np.concatenate(kept)[:count] if kept else np.zeros((0, 3), dtype=np.int64)
    if len(out) < count:
        logger.warning("only %d of %d triplets satisfy the gap filter", len(out), count)
    return out


# ---------------------------------------------------------------- folds

@dataclass
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class FoldPlan:
    folds: list[Fold]
    seed: int

    def __len__(self) -> int:
        return len(self.folds)

    def __getitem__(self, i: int) -> Fold:
        return self.folds[i]


def make_folds(nodes, types, seed: int, n_folds: int = 5, val_fraction: float = 0.15) -> FoldPlan:
    """Stratified k-fold split of labeled ``nodes``.

    Per type, a seeded permutation is cut into ``n_folds`` near-equal test
    blocks (sizes differ by at most one); validation takes
    ``floor(val_fraction * |train|)`` of each type's remaining nodes.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    types = np.asarray(types)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    parts = [[[], [], []] for _ in range(n_folds)]
    for t in np.unique(types):
        members = nodes[types == t]
        if len(members) < n_folds:
            raise ValueError(f"type {t} has {len(members)} labeled nodes; need at least {n_folds}")
        perm = rng.permutation(members)
        blocks = np.array_split(perm, n_folds)
        for f in range(n_folds):
            rest = np.concatenate([blocks[j] for j in range(n_folds) if j != f])
            rest = rng.permutation(rest)
            n_val = int(math.floor(val_fraction * len(rest)))
            parts[f][0].append(rest[n_val:])
            parts[f][1].append(rest[:n_val])
            parts[f][2].append(blocks[f])
    folds = [Fold(*(np.sort(np.concatenate(p)) for p in fold)) for fold in parts]
    return FoldPlan(folds, seed)


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    l2: float = 1e-4
    margin: float = 1.0
    rank_weight: float = 0.0
    triplets: int = 256
    patience: int = 50
    seed: int = 0
    target_transform: str = "identity"
    batch_size: int = 0  # 0 = full batch
    ndcg_k: int = 100
    log_wallclock: bool = False

    def __post_init__(self):
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.rank_weight > 0 and self.margin <= 0:
            raise ValueError("margin must be positive when the ranking loss is enabled")
        if self.target_transform not in TRANSFORMS:
            raise ValueError(f"target_transform must be one of {TRANSFORMS}")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")


def forward_transform(y, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if name == "log1p":
        if np.any(y <= -1):
            raise ValueError("log1p transform needs labels > -1")
        return np.log1p(y)
    return y


def inverse_transform(y, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.expm1(y) if name == "log1p" else y


@dataclass
class TrainResult:
    best_epoch: int
    best_val_mae: float
    epochs_run: int
    log: list[dict] = field(default_factory=list)
    epoch_ms: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def log_csv(self) -> str:
        return rows_to_csv(self.log)

    @property
    def mean_epoch_ms(self) -> float:
        return float(np.mean(self.epoch_ms)) if self.epoch_ms else math.nan


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(LOG_FIELDS), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: format_value(r.get(k)) if r.get(k) is not None else "" for k in LOG_FIELDS})
    return buf.getvalue()


def _split_row(epoch, fold, split, preds, labels, ids, loss, ms, k) -> dict:
    m = evaluate_type(preds, labels, ids, k)
    return dict(epoch=epoch, fold=fold, split=split, mae=m.mae, rmse=m.rmse, nrmse=m.nrmse, ndcg=m.ndcg,
                spearman=m.spearman, loss=loss, epoch_ms=ms)


def train(model, fold: Fold, config: TrainConfig, fold_index: int = 0) -> TrainResult:
    """Full-batch Adam training with early stopping on validation MAE.

    Each epoch runs one forward pass over the whole graph; validation metrics
    are read off that same pass (parameters before the step). On return the
    model holds the best-validation parameters.
    """
    g = model.graph
    y_all = g.labels
    train_nodes, val_nodes = fold.train, fold.val
    if len(train_nodes) == 0:
        raise ValueError("empty training split")
    scored = np.concatenate([train_nodes, val_nodes])
    n_tr = len(train_nodes)
    target = forward_transform(y_all[train_nodes], config.target_transform)
    train_types = g.node_types[train_nodes]
    params = model.parameters()
    opt = ad.Adam(params, lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xBA7C]))
    best = {k: p.data.copy() for k, p in params.items()}
    best_mae, best_epoch = math.inf, 0
    result = TrainResult(0, math.inf, 0)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        scores = model.forward(scored)
        if config.batch_size and config.batch_size < n_tr:
            pick = np.sort(rng.choice(n_tr, size=config.batch_size, replace=False))
        else:
            pick = np.arange(n_tr)
        pred_tr = ad.take_rows(scores, pick)
        loss = mse_loss(pred_tr, target[pick], train_types[pick])
        if config.l2 > 0:
            loss = loss + l2_regularizer(params, config.l2)
        if config.rank_weight > 0:
            trip = sample_triplets(target[pick], config.triplets, config.seed * 1_000_003 + epoch, train_types[pick])
            if len(trip):
                gi, gp, gm = (ad.take_rows(pred_tr, trip[:, c]) for c in range(3))
                loss = loss + ad.scale(margin_ranking_loss(gi, gp, gm, config.margin), config.rank_weight)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingDiverged(epoch, "loss is not finite")
        preds = inverse_transform(scores.data, config.target_transform)
        val_mae = (float(np.abs(preds[n_tr:] - y_all[val_nodes]).mean()) if len(val_nodes)
                   else float(np.abs(preds[:n_tr] - y_all[train_nodes]).mean()))
        if val_mae < best_mae:
            best_mae, best_epoch = val_mae, epoch
            best = {k: p.data.copy() for k, p in params.items()}
        ad.backward(loss)
        try:
            opt.step()
        except FloatingPointError as exc:
            raise TrainingDiverged(epoch, str(exc)) from None
        ms = (time.perf_counter() - t0) * 1000.0
        result.epoch_ms.append(ms)
        result.losses.append(loss_value)
        logged_ms = ms if config.log_wallclock else None
        result.log.append(_split_row(epoch, fold_index, "train", preds[:n_tr], y_all[train_nodes], train_nodes,
                                     loss_value, logged_ms, config.ndcg_k))
        if len(val_nodes):
            result.log.append(_split_row(epoch, fold_index, "val", preds[n_tr:], y_all[val_nodes], val_nodes,
                                         None, logged_ms, config.ndcg_k))
        if epoch - best_epoch >= config.patience:
            break
    for k, p in params.items():
        p.data = best[k]
    result.best_epoch, result.best_val_mae, result.epochs_run = best_epoch, best_mae, epoch
    return result


def predict_labels(model, nodes, transform: str = "identity") -> np.ndarray:
    """Scores of ``nodes`` mapped back to the original label space."""
    return inverse_transform(model.predict(nodes), transform)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
