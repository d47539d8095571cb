"""Experiment orchestration shared by the command line and the benchmark tests."""

from __future__ import annotations

import json
import logging
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .graph import (HeterogeneousGraph, bibliographic_spec, ensure_features, generate_synthetic, homogenize,
                    load_graph)
from .knowledge import (KnowledgeBank, Node2VecParams, bank_manifest, build_knowledge_bank, disable_knowledge,
                        load_bank, save_bank)
from .metapath import Metapath, enumerate_metapaths, parse_metapaths
from .metrics import METRIC_NAMES, EvalReport, evaluate
from .model import ImportanceModel, ModelConfig
from .training import FoldPlan, TrainConfig, make_folds, predict_labels, rows_to_csv, train

logger = logging.getLogger(__name__)


class MissingCacheError(FileNotFoundError):
    pass


# ---------------------------------------------------------------- data

def load_dataset(cfg: RunConfig) -> HeterogeneousGraph:
    if cfg.synthetic:
        spec = bibliographic_spec(seed=cfg.graph_seed, authors=cfg.synthetic_authors, papers=cfg.synthetic_papers,
                                  venues=cfg.synthetic_venues, feature_dim=cfg.feature_dim,
                                  noise=cfg.synthetic_noise)
        return generate_synthetic(spec)
    g = load_graph(cfg.nodes_file, cfg.edges_file, cfg.features_file or None)
    return ensure_features(g, cfg.feature_dim, cfg.seed)


def model_graph(cfg: RunConfig, g: HeterogeneousGraph) -> HeterogeneousGraph:
    """The graph the model sees: homogenized for ``wo_nh``."""
    return homogenize(g) if cfg.variant == "wo_nh" else g


def select_metapaths(cfg: RunConfig, g: HeterogeneousGraph) -> list[Metapath]:
    if cfg.variant == "wo_nh":
        # a single type and relation: the plain two-hop path
        return [Metapath((0, 0, 0), (0, 0))]
    if cfg.metapaths:
        return parse_metapaths(",".join(cfg.metapaths), g)
    paths = enumerate_metapaths(g, cfg.metapath_max_nodes)
    labeled = set(g.labeled_types)
    if not any(p.source_type in labeled for p in paths):
        logger.warning("no enumerated metapath starts from a labeled type")
    return paths


def node2vec_params(cfg: RunConfig) -> Node2VecParams:
    return Node2VecParams(walks_per_node=cfg.walks_per_node, walk_length=cfg.walk_length, window=cfg.window,
                          p=cfg.p, q=cfg.q, negative_samples=cfg.negative_samples, epochs=cfg.walk_epochs,
                          seed=cfg.seed)


def bank_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out) / ("bank_nh" if cfg.variant == "wo_nh" else "bank")


@dataclass
class Prepared:
    graph: HeterogeneousGraph
    metapaths: list[Metapath]
    bank: KnowledgeBank
    cache_hit: bool


def prepare(cfg: RunConfig, g: HeterogeneousGraph | None = None, use_cache: bool = True,
            require_cache: bool = False) -> Prepared:
    """Graph, metapaths and knowledge bank, reusing the on-disk cache when its manifest matches."""
    g = model_graph(cfg, load_dataset(cfg) if g is None else g)
    paths = select_metapaths(cfg, g)
    for p in paths:
        p.check_schema(g)
    params = node2vec_params(cfg)
    expected = bank_manifest(g, paths, params, cfg.pathsim_top_k)
    directory = bank_dir(cfg)
    bank = load_bank(directory, expected) if use_cache else None
    hit = bank is not None
    if bank is None:
        if require_cache:
            raise MissingCacheError(f"no matching knowledge cache in {directory}; run `hinimp preprocess` first")
        bank = build_knowledge_bank(g, paths, params, cfg.pathsim_top_k)
        if use_cache:
            save_bank(bank, directory)
    return Prepared(g, paths, bank, hit)


def apply_disable(cfg: RunConfig, bank: KnowledgeBank) -> KnowledgeBank:
    if cfg.knowledge_disable_fraction > 0:
        return disable_knowledge(bank, cfg.knowledge_disable_fraction, cfg.seed)
    return bank


def model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(heads=cfg.heads, head_dim=cfg.head_dim, layers=cfg.layers,
                       attention_hidden=cfg.attention_hidden, mlp_hidden=cfg.mlp_hidden, variant=cfg.variant,
                       reference_seed=cfg.ref_seed, init_seed=cfg.seed)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, lr=cfg.lr, l2=cfg.l2, margin=cfg.margin, rank_weight=cfg.rank_weight,
                       triplets=cfg.triplets, patience=cfg.patience, seed=cfg.seed,
                       target_transform=cfg.target_transform, batch_size=cfg.batch_size, ndcg_k=cfg.ndcg_k,
                       log_wallclock=cfg.log_wallclock)


def fold_plan(cfg: RunConfig, g: HeterogeneousGraph) -> FoldPlan:
    lab = g.labeled_nodes()
    return make_folds(lab, g.node_types[lab], cfg.seed)


def split_nodes(plan: FoldPlan, fold: int, split: str) -> np.ndarray:
    return getattr(plan[fold], split)


def report_for(model: ImportanceModel, nodes: np.ndarray, cfg: RunConfig, meta: dict | None = None) -> EvalReport:
    g = model.graph
    preds = predict_labels(model, nodes, cfg.target_transform)
    return evaluate(preds, g.labels[nodes], g.node_types[nodes], g.node_type_names, ids=nodes, k=cfg.ndcg_k,
                    meta=meta)


# ---------------------------------------------------------------- folds

@dataclass
class FoldOutcome:
    fold: int
    log: list[dict]
    epoch_ms: list[float]
    test: EvalReport
    best_epoch: int
    epochs_run: int
    seconds: float


def run_fold(cfg: RunConfig, g: HeterogeneousGraph, bank: KnowledgeBank, plan: FoldPlan, fold: int,
             save_to: Path | None = None) -> FoldOutcome:
    t0 = time.perf_counter()
    model = ImportanceModel(g, bank, model_config(cfg))
    result = train(model, plan[fold], train_config(cfg), fold_index=fold)
    test = report_for(model, plan[fold].test, cfg, {"fold": fold, "split": "test"})
    if save_to is not None:
        model.save(save_to, {"train": train_config(cfg).__dict__, "fold": fold, "run": cfg.to_dict(),
                             "disabled_slots": bank.disabled_slots()})
    return FoldOutcome(fold, result.log, result.epoch_ms, test, result.best_epoch, result.epochs_run,
                       time.perf_counter() - t0)


def _fold_job(args):
    cfg, g, bank, plan, fold, save_to = args
    return run_fold(cfg, g, bank, plan, fold, save_to)


def job_pool_size() -> int:
    raw = os.environ.get("HINIMP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"HINIMP_THREADS must be an integer, got {raw!r}") from None


def run_jobs(jobs: list[tuple]) -> list[FoldOutcome]:
    """Run fold jobs in a bounded process pool; results keep submission order."""
    workers = min(job_pool_size(), len(jobs))
    if workers <= 1:
        return [_fold_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork")) as pool:
        return list(pool.map(_fold_job, jobs))


@dataclass
class ExperimentResult:
    folds: list[FoldOutcome]
    config: dict
    version: str
    seconds: float
    cache_hit: bool
    extra: dict = field(default_factory=dict)

    def aggregate(self) -> dict[str, float]:
        out = {}
        for name in METRIC_NAMES:
            vals = [f.test.micro[name] for f in self.folds]
            out[name] = float(np.mean(vals)) if vals else float("nan")
        return out

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "cache_hit": self.cache_hit,
            "wall_clock_seconds": self.seconds,
            "aggregate": self.aggregate(),
            "folds": [{"fold": f.fold, "best_epoch": f.best_epoch, "epochs_run": f.epochs_run,
                       "seconds": f.seconds, "test": f.test.to_dict()} for f in self.folds],
            **self.extra,
        }


def version_string() -> str:
    """``git describe`` when run from a checkout, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                             timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_experiment(cfg: RunConfig, write: bool = True, prepared: Prepared | None = None) -> ExperimentResult:
    """Train and test every configured fold; write logs, checkpoints and a summary under ``cfg.out``."""
    t0 = time.perf_counter()
    prep = prepared or prepare(cfg)
    bank = apply_disable(cfg, prep.bank)
    plan = fold_plan(cfg, prep.graph)
    out = Path(cfg.out)
    jobs = [(cfg, prep.graph, bank, plan, f, (out / f"fold{f}" / "checkpoint") if write else None)
            for f in cfg.folds]
    outcomes = run_jobs(jobs)
    result = ExperimentResult(outcomes, cfg.to_dict(), version_string(), time.perf_counter() - t0, prep.cache_hit)
    if write:
        write_outputs(out, result)
    return result


def write_outputs(out: Path, result: ExperimentResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rows = [r for f in result.folds for r in f.log]
    (out / "metrics.csv").write_text(rows_to_csv(rows))
    # wall-clock numbers stay out of the CSV logs so reruns compare byte for byte
    timing = {str(f.fold): [round(ms, 3) for ms in f.epoch_ms] for f in result.folds}
    (out / "timing.json").write_text(json.dumps({"epoch_ms": timing}, sort_keys=True) + "\n")
    lines = ["fold,type,count,mae,rmse,nrmse,ndcg,spearman"]
    for f in result.folds:
        for row in f.test.to_csv().splitlines()[1:]:
            lines.append(f"{f.fold},{row}")
    (out / "results.csv").write_text("\n".join(lines) + "\n")
    (out / "summary.json").write_text(json.dumps(_jsonable(result.to_dict()), indent=2, sort_keys=True))


def _jsonable(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- planted-signal benchmark

def benchmark_config(seed: int, **overrides) -> RunConfig:
    """Desk-scale planted-signal setting: ~1,000-node author/paper/venue graph, one fold.

    node2vec is shortened (the similarity slot is a minor signal here) and
    training is capped at 200 epochs, which the full model reaches well
    inside the early-stopping horizon.
    """
    base = dict(synthetic="bibliographic", seed=seed, walks_per_node=2, walk_length=10, window=3, walk_epochs=1,
                epochs=200, patience=50, folds=[0], out="")
    base.update(overrides)
    return RunConfig(**base)


@dataclass
class BenchmarkRun:
    seed: int
    mae: float
    rmse: float
    spearman: float
    label_std: float
    mean_epoch_ms: float
    best_epoch: int
    seconds: float


def run_benchmark(cfg: RunConfig, prepared: Prepared | None = None) -> BenchmarkRun:
    """Train fold 0 of ``cfg`` in memory and score its test split."""
    t0 = time.perf_counter()
    prep = prepared or prepare(cfg, use_cache=False)
    bank = apply_disable(cfg, prep.bank)
    plan = fold_plan(cfg, prep.graph)
    outcome = run_fold(cfg, prep.graph, bank, plan, cfg.folds[0])
    g = prep.graph
    std = float(np.std(g.labels[g.labeled_nodes()]))
    m = outcome.test.micro
    return BenchmarkRun(cfg.seed, m["mae"], m["rmse"], m["spearman"], std, float(np.mean(outcome.epoch_ms)),
                        outcome.best_epoch, time.perf_counter() - t0)
