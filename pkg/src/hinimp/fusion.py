"""Attentive fusion of the knowledge bank.

Intra-metapath fusion weighs the L+1 knowledge slots of one sub-network with
coefficients shared by all of its members; inter-metapath fusion then mixes
the per-metapath embeddings of each node. The result is concatenated to the
node's initial features.

Weights use the row-vector layout: ``tanh(c @ Wp + b) @ W`` scores a batch of
slot embeddings ``c`` (one per row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

DEFAULT_HIDDEN = 64


@dataclass
class FusionParameters:
    W1: ad.Tensor   # (h, 1)
    W1p: ad.Tensor  # (128, h)
    b1: ad.Tensor   # (h,)
    W2: ad.Tensor
    W2p: ad.Tensor
    b2: ad.Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int = 128, hidden: int = DEFAULT_HIDDEN) -> "FusionParameters":
        if hidden < 1:
            raise ValueError("attention hidden width must be positive")
        return cls(
            W1=ad.uniform_init(rng, (hidden, 1), hidden, "fusion.W1"),
            W1p=ad.uniform_init(rng, (dim, hidden), dim, "fusion.W1p"),
            b1=ad.zeros_param((hidden,), "fusion.b1"),
            W2=ad.uniform_init(rng, (hidden, 1), hidden, "fusion.W2"),
            W2p=ad.uniform_init(rng, (dim, hidden), dim, "fusion.W2p"),
            b2=ad.zeros_param((hidden,), "fusion.b2"),
        )

    def params(self) -> dict[str, ad.Tensor]:
        return {f"fusion.{k}": getattr(self, k) for k in ("W1", "W1p", "b1", "W2", "W2p", "b2")}


def _member_mean_score(stacked: ad.Tensor, groups: int, W: ad.Tensor, Wp: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    """Mean of ``W . tanh(Wp c + b)`` within each of ``groups`` equal row blocks -> (groups,)."""
    s = ad.tanh(stacked @ Wp + b) @ W
    return ad.mean(ad.reshape(s, (groups, -1)), axis=1)


def intra_metapath_coefficients(slots: list[ad.Tensor], params: FusionParameters) -> ad.Tensor:
    """Softmax-normalized slot weights (length L+1), shared by every member."""
    n = slots[0].shape[0]
    if n == 0:
        raise ValueError("empty sub-network")
    stacked = ad.concat(slots, axis=0)
    raw = _member_mean_score(stacked, len(slots), params.W1, params.W1p, params.b1)
    return ad.softmax(raw)


def fuse_intra(slots: list[ad.Tensor], alpha: ad.Tensor) -> ad.Tensor:
    """``e_{i,k} = sum_l alpha_l c^{(l)}_{i,k}`` for all members at once."""
    n, dim = slots[0].shape
    flat = ad.reshape(ad.concat(slots, axis=0), (len(slots), n * dim))
    mixed = ad.reshape(alpha, (1, -1)) @ flat
    return ad.reshape(mixed, (n, dim))


def metapath_scores(embeddings: list[ad.Tensor], params: FusionParameters) -> ad.Tensor:
    """Unnormalized member-averaged score of each metapath embedding -> (K,)."""
    return ad.concat([_member_mean_score(e, 1, params.W2, params.W2p, params.b2) for e in embeddings])


def inter_metapath_coefficients(scores: ad.Tensor, membership: np.ndarray) -> ad.Tensor:
    """Per-node softmax of the metapath scores over the metapaths a node belongs to.

    ``membership`` is a boolean (n, K) matrix. Rows without any membership get
    the unmasked softmax; their fused embedding is zero regardless since the
    member-scattered embeddings vanish on those rows.
    """
    membership = np.asarray(membership, dtype=bool)
    n, k = membership.shape
    orphan = ~membership.any(axis=1)
    offset = np.where(membership | orphan[:, None], 0.0, -np.inf)
    logits = ad.reshape(scores, (1, k)) + ad.Tensor(offset)
    return ad.softmax(logits)


def member_index(rows: np.ndarray, n: int) -> np.ndarray:
    """Gather index for ``scatter_members``: member position, or the padding row."""
    index = np.full(n, len(rows), dtype=np.int64)
    index[rows] = np.arange(len(rows))
    return index


def scatter_members(e: ad.Tensor, rows: np.ndarray, n: int, index: np.ndarray | None = None) -> ad.Tensor:
    """Place member rows of ``e`` at ``rows`` of an (n, dim) matrix, zeros elsewhere."""
    if index is None:
        index = member_index(rows, n)
    padded = ad.concat([e, ad.Tensor(np.zeros((1, e.shape[1])))], axis=0)
    return ad.take_rows(padded, index)


def fuse_inter(placed: list[ad.Tensor], tau: ad.Tensor) -> ad.Tensor:
    """``e_i = sum_k tau_{i,k} e_{i,k}`` with embeddings already placed per node."""
    out = None
    for k, e in enumerate(placed):
        term = ad.slice_cols(tau, k, k + 1) * e
        out = term if out is None else out + term
    return out


def assemble(features: np.ndarray, e: ad.Tensor) -> ad.Tensor:
    """``x_i = e'_i || e_i``."""
    return ad.concat([ad.Tensor(np.asarray(features, dtype=np.float64)), e], axis=1)
