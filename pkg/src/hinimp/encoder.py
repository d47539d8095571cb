"""Edge-type aware multi-head self-attention over the heterogeneous graph.

Each node attends over its incoming edges. The logit of edge ``j -> i`` with
edge type ``r`` in head ``m`` is ``q_i W_r k_j^T mu_r / sqrt(d)``; values of
the neighbors are aggregated with the per-target softmax of those logits and
added back through ``W_out`` as a residual update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import HeterogeneousGraph


@dataclass(frozen=True)
class EdgeStructure:
    """Incoming-edge lists grouped by edge type (constant across the forward pass)."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    bounds: np.ndarray  # edges of type r live in [bounds[r], bounds[r+1])

    def __post_init__(self):
        # per-type views built once, so the same index arrays are reused every pass
        object.__setattr__(self, "type_src", [self.src[a:b] for a, b in zip(self.bounds[:-1], self.bounds[1:])])
        object.__setattr__(self, "type_dst", [self.dst[a:b] for a, b in zip(self.bounds[:-1], self.bounds[1:])])

    @classmethod
    def from_graph(cls, g: HeterogeneousGraph) -> "EdgeStructure":
        order = np.lexsort((g.edge_src, g.edge_dst, g.edge_types))
        et = g.edge_types[order]
        bounds = np.searchsorted(et, np.arange(g.num_edge_types + 1))
        return cls(g.node_count, g.edge_src[order], g.edge_dst[order], et, bounds)

    @property
    def num_edge_types(self) -> int:
        return len(self.bounds) - 1

    def has_incoming(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_nodes) > 0


@dataclass
class EncoderParameters:
    W_in: ad.Tensor
    W_qry: list[ad.Tensor]
    W_key: list[ad.Tensor]
    W_val: list[ad.Tensor]
    W_rel: list[ad.Tensor]
    mu: list[ad.Tensor]
    W_out: ad.Tensor
    heads: int
    head_dim: int
    layers: int

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, num_edge_types: int, heads: int = 4,
             head_dim: int = 32, layers: int = 2) -> "EncoderParameters":
        if heads < 1 or head_dim < 1 or layers < 1:
            raise ValueError("heads, head_dim and layers must be positive")
        d, md = head_dim, heads * head_dim
        return cls(
            W_in=ad.uniform_init(rng, (in_dim, md), in_dim, "encoder.W_in"),
            W_qry=[ad.uniform_init(rng, (d, d), d, f"encoder.head{m}.W_qry") for m in range(heads)],
            W_key=[ad.uniform_init(rng, (d, d), d, f"encoder.head{m}.W_key") for m in range(heads)],
            W_val=[ad.uniform_init(rng, (d, d), d, f"encoder.head{m}.W_val") for m in range(heads)],
            W_rel=[ad.uniform_init(rng, (d, d), d, f"encoder.rel{r}.W") for r in range(num_edge_types)],
            mu=[ad.Tensor(np.ones(1), requires_grad=True, name=f"encoder.rel{r}.mu") for r in range(num_edge_types)],
            W_out=ad.uniform_init(rng, (md, md), md, "encoder.W_out"),
            heads=heads, head_dim=head_dim, layers=layers,
        )

    @property
    def output_dim(self) -> int:
        return self.heads * self.head_dim

    def params(self) -> dict[str, ad.Tensor]:
        out = {"encoder.W_in": self.W_in}
        for m in range(self.heads):
            out[f"encoder.head{m}.W_qry"] = self.W_qry[m]
            out[f"encoder.head{m}.W_key"] = self.W_key[m]
            out[f"encoder.head{m}.W_val"] = self.W_val[m]
        for r in range(len(self.W_rel)):
            out[f"encoder.rel{r}.W"] = self.W_rel[r]
            out[f"encoder.rel{r}.mu"] = self.mu[r]
        out["encoder.W_out"] = self.W_out
        return out


def head_slice(h: ad.Tensor, m: int, d: int) -> ad.Tensor:
    return ad.slice_cols(h, m * d, (m + 1) * d)


def project_qkv(h_m: ad.Tensor, m: int, params: EncoderParameters):
    """Query, key and value of head ``m`` for every row of ``h_m`` (row-vector layout)."""
    if not 0 <= m < params.heads:
        raise IndexError(f"head {m} out of range")
    return h_m @ params.W_qry[m], h_m @ params.W_key[m], h_m @ params.W_val[m]


def attention_logits(q: ad.Tensor, k: ad.Tensor, edges: EdgeStructure, params: EncoderParameters) -> ad.Tensor:
    """One logit per edge, in ``edges`` order."""
    scale = 1.0 / math.sqrt(params.head_dim)
    parts = []
    for r in range(edges.num_edge_types):
        if edges.bounds[r + 1] == edges.bounds[r]:
            continue
        kr = ad.take_rows(k, edges.type_src[r]) @ ad.transpose(params.W_rel[r])
        qi = ad.take_rows(q, edges.type_dst[r])
        parts.append(ad.sum(qi * kr, axis=1) * ad.scale(params.mu[r], scale))
    return ad.concat(parts, axis=0)


def attention_scores(q: ad.Tensor, k: ad.Tensor, edges: EdgeStructure, params: EncoderParameters) -> ad.Tensor:
    """Softmax of the edge logits over each target's incoming edges."""
    return ad.segment_softmax(attention_logits(q, k, edges, params), edges.dst, edges.num_nodes)


def aggregate(scores: ad.Tensor, v: ad.Tensor, edges: EdgeStructure) -> ad.Tensor:
    """``sum_j S(j, i) v_j`` per target node; zero for nodes without incoming edges."""
    weighted = ad.take_rows(v, edges.src) * ad.reshape(scores, (-1, 1))
    return ad.segment_sum(weighted, edges.dst, edges.num_nodes)


def encoder_layer(h: ad.Tensor, edges: EdgeStructure, params: EncoderParameters,
                  record: list | None = None) -> ad.Tensor:
    """One residual attention update ``h + concat_m(agg_m) W_out``."""
    if edges.src.size == 0:
        return h
    outs = []
    for m in range(params.heads):
        q, k, v = project_qkv(head_slice(h, m, params.head_dim), m, params)
        s = attention_scores(q, k, edges, params)
        if record is not None:
            record.append(s.data)
        outs.append(aggregate(s, v, edges))
    return h + ad.concat(outs, axis=1) @ params.W_out


def encode(x: ad.Tensor, edges: EdgeStructure, params: EncoderParameters, record: list | None = None) -> ad.Tensor:
    """``h^R`` for all nodes: input projection, then ``layers - 1`` attention updates."""
    h = x @ params.W_in
    for _ in range(params.layers - 1):
        h = encoder_layer(h, edges, params, record)
    return h
