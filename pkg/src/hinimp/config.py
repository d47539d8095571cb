"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Values are coerced to the type of
the key's default; list-valued keys take comma-separated items. Unknown keys
are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import VARIANTS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data: exactly one of `synthetic` or `nodes_file` + `edges_file`
    synthetic: str = field(default="bibliographic", metadata={"doc": "synthetic generator name, or empty when loading files"})
    nodes_file: str = field(default="", metadata={"doc": "node TSV (id, type, label)"})
    edges_file: str = field(default="", metadata={"doc": "edge TSV (src, dst, type)"})
    features_file: str = field(default="", metadata={"doc": "optional feature TSV (id, values...)"})
    feature_dim: int = field(default=16, metadata={"doc": "dimension of synthesized features when none are given"})
    synthetic_authors: int = field(default=300, metadata={"doc": "synthetic author count"})
    synthetic_papers: int = field(default=650, metadata={"doc": "synthetic paper count"})
    synthetic_venues: int = field(default=50, metadata={"doc": "synthetic venue count"})
    synthetic_noise: float = field(default=0.05, metadata={"doc": "label noise, relative to the clean label std"})
    synthetic_seed: int = field(default=-1, metadata={"doc": "graph seed; -1 uses `seed`"})
    # knowledge
    metapaths: list = field(default_factory=list, metadata={"doc": "metapaths, e.g. A[writes]P[written_by]A; empty = enumerate"})
    metapath_max_nodes: int = field(default=3, metadata={"doc": "node slots for metapath enumeration"})
    pathsim_top_k: int = field(default=10, metadata={"doc": "PathSim peers kept per node"})
    walks_per_node: int = field(default=10, metadata={"doc": "node2vec walks per node"})
    walk_length: int = field(default=40, metadata={"doc": "node2vec walk length"})
    window: int = field(default=5, metadata={"doc": "skip-gram window"})
    p: float = field(default=1.0, metadata={"doc": "node2vec return parameter"})
    q: float = field(default=1.0, metadata={"doc": "node2vec in-out parameter"})
    negative_samples: int = field(default=5, metadata={"doc": "negatives per skip-gram pair"})
    walk_epochs: int = field(default=5, metadata={"doc": "skip-gram epochs"})
    # model
    heads: int = field(default=4, metadata={"doc": "attention heads M"})
    head_dim: int = field(default=32, metadata={"doc": "per-head dimension d"})
    layers: int = field(default=2, metadata={"doc": "encoder layers R"})
    attention_hidden: int = field(default=64, metadata={"doc": "fusion attention width h"})
    mlp_hidden: int = field(default=64, metadata={"doc": "hidden width of the wo_wd head"})
    variant: str = field(default="full", metadata={"doc": "one of " + ", ".join(VARIANTS)})
    knowledge_disable_fraction: float = field(default=0.0, metadata={"doc": "fraction of knowledge slots zeroed"})
    reference_seed: int = field(default=-1, metadata={"doc": "seed of the transport reference; -1 uses `seed`"})
    # training
    epochs: int = field(default=1000, metadata={"doc": "maximum epochs"})
    lr: float = field(default=1e-3, metadata={"doc": "Adam learning rate"})
    l2: float = field(default=1e-4, metadata={"doc": "L2 coefficient"})
    margin: float = field(default=1.0, metadata={"doc": "ranking margin"})
    rank_weight: float = field(default=0.0, metadata={"doc": "ranking-loss weight (0 disables)"})
    triplets: int = field(default=256, metadata={"doc": "triplets per epoch"})
    patience: int = field(default=50, metadata={"doc": "early-stopping patience on validation MAE"})
    target_transform: str = field(default="identity", metadata={"doc": "identity or log1p"})
    batch_size: int = field(default=0, metadata={"doc": "labeled nodes per step; 0 = full batch"})
    ndcg_k: int = field(default=100, metadata={"doc": "NDCG cutoff"})
    log_wallclock: bool = field(default=False, metadata={"doc": "write epoch_ms into metrics.csv (breaks byte-identical reruns)"})
    folds: list = field(default_factory=lambda: [0, 1, 2, 3, 4], metadata={"doc": "folds to run"})
    # evaluate / predict / ablate
    fold: int = field(default=0, metadata={"doc": "fold used by evaluate and predict"})
    eval_split: str = field(default="test", metadata={"doc": "split scored by evaluate: train, val or test"})
    predict_nodes: list = field(default_factory=list, metadata={"doc": "node ids to score; empty = all labeled-type nodes"})
    ablate_fractions: list = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8],
                                   metadata={"doc": "knowledge disable fractions for ablate"})
    # run
    seed: int = field(default=0, metadata={"doc": "run seed"})
    out: str = field(default="runs/default", metadata={"doc": "output directory"})

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        files = bool(self.nodes_file or self.edges_file)
        if bool(self.synthetic) == files:
            raise ConfigError("set exactly one of `synthetic` or `nodes_file`/`edges_file`")
        if files and not (self.nodes_file and self.edges_file):
            raise ConfigError("`nodes_file` and `edges_file` go together")
        if self.synthetic and self.synthetic != "bibliographic":
            raise ConfigError(f"unknown synthetic generator {self.synthetic!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {', '.join(VARIANTS)}")
        if not 0.0 <= self.knowledge_disable_fraction <= 1.0:
            raise ConfigError("knowledge_disable_fraction must lie in [0, 1]")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError("eval_split must be train, val or test")
        if any(not 0 <= f < 5 for f in self.folds) or not 0 <= self.fold < 5:
            raise ConfigError("fold indices must lie in 0..4")

    @property
    def graph_seed(self) -> int:
        return self.seed if self.synthetic_seed < 0 else self.synthetic_seed

    @property
    def ref_seed(self) -> int:
        return self.seed if self.reference_seed < 0 else self.reference_seed

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_LIST_ITEM = {"metapaths": str, "folds": int, "predict_nodes": str, "ablate_fractions": float}


def _format(v) -> str:
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            item = _LIST_ITEM[name]
            if name == "metapaths":
                # metapaths themselves never contain commas
                return [s.strip() for s in raw.split(",") if s.strip()]
            return [item(s) for s in raw.split(",") if s.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def parse_pairs(pairs: dict[str, str], base: dict | None = None) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    values = dict(base or {})
    for key, raw in pairs.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        values[key] = _coerce(key, raw, default)
    if "nodes_file" in pairs and "synthetic" not in pairs:
        values["synthetic"] = ""
    return RunConfig(**values)


def read_pairs(path) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return pairs


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    pairs = read_pairs(path) if path else {}
    pairs.update(overrides or {})
    return parse_pairs(pairs)


def help_text() -> str:
    lines = ["configuration keys (key = default):"]
    for f in fields(RunConfig):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        lines.append(f"  {f.name} = {_format(default)}")
        lines.append(f"      {f.metadata.get('doc', '')}")
    return "\n".join(lines)
