"""Knowledge bank: per (metapath, member) centrality scalars and similarity embeddings.

Slots ``0..L-1`` hold centralities, which become 128-d embeddings through
trainable per-measure perceptrons at forward time; slot ``L`` holds the
fixed similarity embedding. A boolean slot mask implements knowledge
disabling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..graph import HeterogeneousGraph
from ..metapath import InducedSubnetwork, Metapath, induce_subnetwork
from .centrality import MEASURES, compute_centralities
from .node2vec import EMBED_DIM, Node2VecParams, random_walk_embed
from .similarity import attribute_similarity_graph, pathsim, similarity_embedding, top_k_graph

logger = logging.getLogger(__name__)

NUM_CENTRALITIES = len(MEASURES)
NUM_SLOTS = NUM_CENTRALITIES + 1
BANK_VERSION = 1


@dataclass
class SubnetworkKnowledge:
    metapath: Metapath
    name: str
    node_type: int
    members: np.ndarray
    centrality: np.ndarray  # (n, L), min-max normalized
    similarity: np.ndarray  # (n, 128)
    mask: np.ndarray  # (n, L+1) bool, False = disabled slot

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class KnowledgeBank:
    subnets: list[SubnetworkKnowledge]
    manifest: dict = field(default_factory=dict)

    @property
    def num_slots(self) -> int:
        return self.subnets[0].mask.shape[1] if self.subnets else NUM_SLOTS

    def metapaths_of_type(self, t: int) -> list[int]:
        return [k for k, s in enumerate(self.subnets) if s.node_type == t]

    def total_slots(self) -> int:
        return int(sum(s.mask.size for s in self.subnets))

    def disabled_slots(self) -> int:
        return int(sum((~s.mask).sum() for s in self.subnets))


@dataclass
class Perceptron:
    """Scalar-to-128-d map ``W_b tanh(W_a x + b_a) + b_b`` (row-vector layout)."""

    Wa: ad.Tensor
    ba: ad.Tensor
    Wb: ad.Tensor
    bb: ad.Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int = EMBED_DIM, name: str = "perceptron") -> "Perceptron":
        return cls(ad.uniform_init(rng, (1, dim), 1, f"{name}.Wa"), ad.zeros_param((dim,), f"{name}.ba"),
                   ad.uniform_init(rng, (dim, dim), dim, f"{name}.Wb"), ad.zeros_param((dim,), f"{name}.bb"))

    def params(self, prefix: str) -> dict[str, ad.Tensor]:
        return {f"{prefix}.Wa": self.Wa, f"{prefix}.ba": self.ba, f"{prefix}.Wb": self.Wb, f"{prefix}.bb": self.bb}

    def __call__(self, values) -> ad.Tensor:
        x = values if isinstance(values, ad.Tensor) else ad.Tensor(np.asarray(values, dtype=np.float64))
        if x.ndim == 1:
            x = ad.reshape(x, (-1, 1))
        hidden = ad.tanh(x @ self.Wa + self.ba)
        return hidden @ self.Wb + self.bb


def vectorize_centrality(value, l: int, mlps: list[Perceptron]) -> ad.Tensor:
    """Embed a centrality value with the ``l``-th perceptron.

    A scalar (float or 0/1-d tensor) gives a 128-vector; a column of ``n``
    values gives ``n x 128``.
    """
    if not 0 <= l < len(mlps):
        raise IndexError(f"centrality index {l} out of range")
    x = value if isinstance(value, ad.Tensor) else ad.Tensor(np.asarray(value, dtype=np.float64))
    if x.size == 1 and x.ndim <= 1:
        return ad.reshape(mlps[l](ad.reshape(x, (1, 1))), (-1,))
    return mlps[l](x)


def slot_embeddings(sub: SubnetworkKnowledge, mlps: list[Perceptron]) -> list[ad.Tensor]:
    """The L+1 slot matrices (each ``n x 128``) of one sub-network, masks applied."""
    slots = []
    for l in range(NUM_CENTRALITIES):
        emb = mlps[l](sub.centrality[:, l])
        m = sub.mask[:, l]
        slots.append(emb if m.all() else emb * ad.Tensor(m[:, None].astype(np.float64)))
    sim = sub.similarity * sub.mask[:, NUM_CENTRALITIES:NUM_CENTRALITIES + 1]
    slots.append(ad.Tensor(sim))
    return slots


def build_subnetwork_knowledge(g: HeterogeneousGraph, sub: InducedSubnetwork, name: str,
                               params: Node2VecParams, top_k: int = 10) -> SubnetworkKnowledge:
    cent = compute_centralities(sub)
    key = sub.metapath_index
    f_att = random_walk_embed(attribute_similarity_graph(sub, g.features), params, key=2 * key)
    f_top = random_walk_embed(top_k_graph(pathsim(sub), top_k), params, key=2 * key + 1)
    sim = similarity_embedding(f_att, f_top)
    return SubnetworkKnowledge(sub.metapath, name, sub.node_type, sub.members.copy(), cent.normalized, sim,
                               np.ones((sub.size, NUM_SLOTS), dtype=bool))


def build_knowledge_bank(g: HeterogeneousGraph, metapaths: list[Metapath], params: Node2VecParams,
                         top_k: int = 10) -> KnowledgeBank:
    if g.features is None:
        raise ValueError("knowledge bank needs node features (load or synthesize them first)")
    subnets = []
    for k, p in enumerate(metapaths):
        sub = induce_subnetwork(g, p, k)
        name = p.format(g)
        if sub.size == 0:
            logger.warning("metapath %s induces an empty sub-network; skipped", name)
            continue
        subnets.append(build_subnetwork_knowledge(g, sub, name, params, top_k))
        logger.info("knowledge for %s: %d members", name, sub.size)
    manifest = bank_manifest(g, metapaths, params, top_k)
    return KnowledgeBank(subnets, manifest)


def bank_manifest(g: HeterogeneousGraph, metapaths: list[Metapath], params: Node2VecParams, top_k: int) -> dict:
    return {
        "version": BANK_VERSION,
        "graph": g.fingerprint(),
        "metapaths": [p.format(g) for p in metapaths],
        "node2vec": params.as_dict(),
        "pathsim_top_k": top_k,
        "measures": list(MEASURES),
        "dimension": EMBED_DIM,
    }


def disable_knowledge(bank: KnowledgeBank, fraction: float, seed: int) -> KnowledgeBank:
    """Zero exactly ``round(fraction * slots)`` uniformly chosen (metapath, node, slot) entries."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    total = bank.total_slots()
    count = int(round(fraction * total))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD15AB1E]))
    flat = np.ones(total, dtype=bool)
    if count:
        flat[rng.choice(total, size=count, replace=False)] = False
    subnets, offset = [], 0
    for s in bank.subnets:
        m = flat[offset:offset + s.mask.size].reshape(s.mask.shape) & s.mask
        offset += s.mask.size
        subnets.append(replace(s, mask=m))
    return KnowledgeBank(subnets, dict(bank.manifest))


# ---------------------------------------------------------------- cache

def save_bank(bank: KnowledgeBank, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for k, s in enumerate(bank.subnets):
        arrays[f"k{k}.members"] = s.members.astype("<i8")
        arrays[f"k{k}.centrality"] = s.centrality.astype("<f8")
        arrays[f"k{k}.similarity"] = s.similarity.astype("<f8")
        arrays[f"k{k}.mask"] = s.mask
        arrays[f"k{k}.path"] = np.array(list(s.metapath.node_types) + [-1] + list(s.metapath.edge_types), dtype="<i8")
    np.savez(directory / "bank.npz", **arrays)
    manifest = dict(bank.manifest, subnets=[s.name for s in bank.subnets])
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_bank(directory, expected: dict | None = None) -> KnowledgeBank | None:
    """Load a cached bank; ``None`` when absent or when its manifest differs from ``expected``."""
    directory = Path(directory)
    mpath, apath = directory / "manifest.json", directory / "bank.npz"
    if not mpath.exists() or not apath.exists():
        return None
    manifest = json.loads(mpath.read_text())
    names = manifest.pop("subnets", [])
    if expected is not None and json.loads(json.dumps(expected, sort_keys=True)) != manifest:
        return None
    subnets = []
    with np.load(apath) as z:
        for k, name in enumerate(names):
            code = z[f"k{k}.path"].tolist()
            cut = code.index(-1)
            mp = Metapath(tuple(code[:cut]), tuple(code[cut + 1:]))
            subnets.append(SubnetworkKnowledge(mp, name, mp.node_types[0], z[f"k{k}.members"],
                                               z[f"k{k}.centrality"], z[f"k{k}.similarity"], z[f"k{k}.mask"]))
    return KnowledgeBank(subnets, manifest)
