"""The node importance model and its ablation variants.

Forward pass: knowledge slots -> intra/inter metapath fusion -> ``x_i`` ->
attention encoder ``h^R`` -> Wasserstein embedding ``h*`` -> ``lambda . h*``.

Variants
--------
full       the complete model
wo_lambda  score is the plain sum of ``h*`` (lambda fixed to ones)
wo_wd      two-layer perceptron head on ``h^R`` instead of the transport head
wo_att     no attention encoder: ``h^R = e_i``
wo_nh      same model on the homogenized graph (see ``graph.homogenize``)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .encoder import EdgeStructure, EncoderParameters, encode
from .fusion import (FusionParameters, assemble, fuse_inter, fuse_intra, inter_metapath_coefficients,
                     intra_metapath_coefficients, member_index, metapath_scores, scatter_members)
from .graph import HeterogeneousGraph
from .knowledge.bank import NUM_CENTRALITIES, KnowledgeBank, Perceptron, slot_embeddings
from .knowledge.node2vec import EMBED_DIM
from .ot import ReferenceDistribution, wasserstein_embed

VARIANTS = ("full", "wo_wd", "wo_lambda", "wo_nh", "wo_att")
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    heads: int = 4
    head_dim: int = 32
    layers: int = 2
    attention_hidden: int = 64
    mlp_hidden: int = 64
    variant: str = "full"
    reference_seed: int = 0
    init_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")


@dataclass
class TypePlan:
    """Static bookkeeping for one node type: its nodes and metapath memberships."""

    node_type: int
    nodes: np.ndarray
    subnets: list[int]
    member_rows: list[np.ndarray]

    def __post_init__(self):
        self.membership = np.zeros((len(self.nodes), len(self.subnets)), dtype=bool)
        for j, rows in enumerate(self.member_rows):
            self.membership[rows, j] = True
        self.scatter_index = [member_index(rows, len(self.nodes)) for rows in self.member_rows]


def type_plans(g: HeterogeneousGraph, bank: KnowledgeBank) -> list[TypePlan]:
    plans = []
    for t in range(g.num_node_types):
        nodes = g.nodes_of_type(t)
        pos = np.full(g.node_count, -1)
        pos[nodes] = np.arange(len(nodes))
        ks = bank.metapaths_of_type(t)
        plans.append(TypePlan(t, nodes, ks, [pos[bank.subnets[k].members] for k in ks]))
    return plans


@dataclass
class Trace:
    """Intermediate values recorded during one forward pass (numpy copies)."""

    alpha: dict[int, np.ndarray] = field(default_factory=dict)
    tau: dict[int, np.ndarray] = field(default_factory=dict)
    attention: list[np.ndarray] = field(default_factory=list)


class ImportanceModel:
    def __init__(self, graph: HeterogeneousGraph, bank: KnowledgeBank, config: ModelConfig | None = None):
        if graph.features is None:
            raise ValueError("the model needs node features")
        self.graph = graph
        self.bank = bank
        self.config = config or ModelConfig()
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence([cfg.init_seed, 0x5EED]))
        self.edges = EdgeStructure.from_graph(graph)
        self.plans = type_plans(graph, bank)
        self._slot_tables()
        order = np.concatenate([p.nodes for p in self.plans])
        self._type_inverse = np.empty_like(order)
        self._type_inverse[order] = np.arange(len(order))
        self.perceptrons = [Perceptron.init(rng, EMBED_DIM, f"perceptron{l}") for l in range(NUM_CENTRALITIES)]
        self.fusion = FusionParameters.init(rng, EMBED_DIM, cfg.attention_hidden)
        in_dim = graph.feature_dim + EMBED_DIM
        self.encoder = None
        if cfg.variant != "wo_att":
            self.encoder = EncoderParameters.init(rng, in_dim, graph.num_edge_types, cfg.heads, cfg.head_dim,
                                                  cfg.layers)
        hidden_dim = EMBED_DIM if self.encoder is None else self.encoder.output_dim
        self.reference = ReferenceDistribution.sample(hidden_dim, cfg.reference_seed)
        self.head: dict[str, ad.Tensor] = {}
        if cfg.variant == "wo_wd":
            self.head = {
                "head.W1": ad.uniform_init(rng, (hidden_dim, cfg.mlp_hidden), hidden_dim, "head.W1"),
                "head.b1": ad.zeros_param((cfg.mlp_hidden,), "head.b1"),
                "head.W2": ad.uniform_init(rng, (cfg.mlp_hidden,), cfg.mlp_hidden, "head.W2"),
                "head.b2": ad.zeros_param((1,), "head.b2"),
            }
        elif cfg.variant != "wo_lambda":
            self.head = {"head.lambda": ad.uniform_init(rng, (hidden_dim,), hidden_dim, "head.lambda")}

    # ------------------------------------------------------------ parameters

    def parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        for l, p in enumerate(self.perceptrons):
            out.update(p.params(f"perceptron{l}"))
        out.update(self.fusion.params())
        if self.encoder is not None:
            out.update(self.encoder.params())
        out.update(self.head)
        return out

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    # ------------------------------------------------------------ forward

    def _slot_tables(self) -> None:
        """Distinct centrality values per measure, with per-subnet lookup indices.

        A perceptron output depends only on its input value, so each measure
        is evaluated once per distinct value; disabled slots point at an
        extra all-zero row.
        """
        self._uniq, self._lookup = [], []
        for l in range(NUM_CENTRALITIES):
            vals = np.concatenate([s.centrality[:, l] for s in self.bank.subnets]) if self.bank.subnets else np.zeros(0)
            live = np.concatenate([s.mask[:, l] for s in self.bank.subnets]) if self.bank.subnets else np.zeros(0, bool)
            uniq, inv = np.unique(vals[live], return_inverse=True)
            idx = np.full(len(vals), len(uniq), dtype=np.int64)
            idx[live] = inv
            bounds = np.cumsum([0] + [s.size for s in self.bank.subnets])
            self._uniq.append(uniq)
            self._lookup.append([idx[bounds[k]:bounds[k + 1]] for k in range(len(self.bank.subnets))])
        self._similarity = [s.similarity * s.mask[:, NUM_CENTRALITIES:NUM_CENTRALITIES + 1] for s in self.bank.subnets]

    def _metapath_embeddings(self, trace: Trace | None) -> list[ad.Tensor]:
        """``e_{i,k}`` for every sub-network (member rows), via the distinct-value tables."""
        f = self.fusion
        tables, scores = [], []
        for l, mlp in enumerate(self.perceptrons):
            u = mlp(self._uniq[l]) if len(self._uniq[l]) else ad.Tensor(np.zeros((0, EMBED_DIM)))
            u = ad.concat([u, ad.Tensor(np.zeros((1, EMBED_DIM)))], axis=0)
            tables.append(u)
            scores.append(ad.reshape(ad.tanh(u @ f.W1p + f.b1) @ f.W1, (-1,)))
        out = []
        for k, sub in enumerate(self.bank.subnets):
            raw = []
            for l in range(NUM_CENTRALITIES):
                weights = np.bincount(self._lookup[l][k], minlength=tables[l].shape[0]) / sub.size
                raw.append(ad.reshape(ad.Tensor(weights) @ scores[l], (1,)))
            sim = ad.Tensor(self._similarity[k])
            raw.append(ad.reshape(ad.mean(ad.tanh(sim @ f.W1p + f.b1) @ f.W1), (1,)))
            alpha = ad.softmax(ad.concat(raw))
            if trace is not None:
                trace.alpha[k] = alpha.data.copy()
            e = sim * ad.gather(alpha, [NUM_CENTRALITIES])
            for l in range(NUM_CENTRALITIES):
                e = e + ad.take_rows(tables[l], self._lookup[l][k]) * ad.gather(alpha, [l])
            out.append(e)
        return out

    def fused_embeddings(self, trace: Trace | None = None) -> ad.Tensor:
        """``e_i`` for every node (zero rows for types without metapaths)."""
        e_all = self._metapath_embeddings(trace)
        per_type = []
        for plan in self.plans:
            if not plan.subnets:
                per_type.append(ad.Tensor(np.zeros((len(plan.nodes), EMBED_DIM))))
                continue
            e_k = [e_all[k] for k in plan.subnets]
            tau = inter_metapath_coefficients(metapath_scores(e_k, self.fusion), plan.membership)
            if trace is not None:
                trace.tau[plan.node_type] = tau.data.copy()
            placed = [scatter_members(e, rows, len(plan.nodes), idx)
                      for e, rows, idx in zip(e_k, plan.member_rows, plan.scatter_index)]
            per_type.append(fuse_inter(placed, tau))
        return ad.take_rows(ad.concat(per_type, axis=0), self._type_inverse)

    def reference_metapath_embeddings(self) -> list[ad.Tensor]:
        """Slow per-member evaluation of the intra-metapath fusion (test oracle)."""
        out = []
        for sub in self.bank.subnets:
            slots = slot_embeddings(sub, self.perceptrons)
            out.append(fuse_intra(slots, intra_metapath_coefficients(slots, self.fusion)))
        return out

    def hidden(self, trace: Trace | None = None) -> ad.Tensor:
        e = self.fused_embeddings(trace)
        if self.encoder is None:
            return e
        x = assemble(self.graph.features, e)
        return encode(x, self.edges, self.encoder, None if trace is None else trace.attention)

    def head_scores(self, h: ad.Tensor) -> ad.Tensor:
        v = self.config.variant
        if v == "wo_wd":
            hid = ad.tanh(h @ self.head["head.W1"] + self.head["head.b1"])
            return hid @ self.head["head.W2"] + self.head["head.b2"]
        h_star = wasserstein_embed(h, self.reference)
        if v == "wo_lambda":
            return ad.sum(h_star, axis=1)
        return h_star @ self.head["head.lambda"]

    def forward(self, nodes=None, trace: Trace | None = None) -> ad.Tensor:
        """Importance scores of ``nodes`` (global indices; all nodes when None)."""
        h = self.hidden(trace)
        if nodes is not None:
            h = ad.take_rows(h, np.asarray(nodes, dtype=np.int64))
        return self.head_scores(h)

    def predict(self, nodes=None) -> np.ndarray:
        return self.forward(nodes).data.copy()

    # ------------------------------------------------------------ checkpoints

    def save(self, directory, extra: dict | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {name: p.data.astype("<f8") for name, p in self.parameters().items()}
        np.savez(directory / "params.npz", **arrays)
        manifest = {
            "version": CHECKPOINT_VERSION,
            "model": asdict(self.config),
            "reference": {"seed": self.reference.seed, "values": self.reference.values.tolist()},
            "graph": self.graph.fingerprint(),
            "bank": self.bank.manifest,
            "shapes": {name: list(a.shape) for name, a in arrays.items()},
        }
        if extra:
            manifest.update(extra)
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory, graph: HeterogeneousGraph, bank: KnowledgeBank,
             reference_seed: int | None = None) -> tuple["ImportanceModel", dict]:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
        ref = manifest.get("reference")
        if not ref:
            raise ValueError("checkpoint carries no reference distribution; refusing to score")
        if reference_seed is not None and reference_seed != ref["seed"]:
            raise ValueError(f"reference seed mismatch: checkpoint {ref['seed']}, config {reference_seed}")
        if manifest["graph"] != graph.fingerprint():
            raise ValueError("checkpoint was trained on a different graph")
        model = cls(graph, bank, ModelConfig(**manifest["model"]))
        stored = np.asarray(ref["values"], dtype=np.float64)
        if not np.array_equal(stored, model.reference.values):
            raise ValueError("stored reference values do not match their seed")
        params = model.parameters()
        with np.load(directory / "params.npz") as z:
            if set(z.files) != set(params):
                raise ValueError("checkpoint parameters do not match the model layout")
            for name, p in params.items():
                if z[name].shape != p.shape:
                    raise ValueError(f"parameter {name}: shape {z[name].shape} != {p.shape}")
                p.data = z[name].astype(np.float64)
        return model, manifest
