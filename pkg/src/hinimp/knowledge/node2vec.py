"""node2vec: second-order biased walks and skip-gram with negative sampling.

Walkers advance in lock-step so each step is a handful of vectorized numpy
calls; the corpus and the training order depend only on the seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

EMBED_DIM = 128


@dataclass(frozen=True)
class Node2VecParams:
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    p: float = 1.0
    q: float = 1.0
    negative_samples: int = 5
    dimension: int = EMBED_DIM
    epochs: int = 5
    learning_rate: float = 0.025
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("node2vec p and q must be positive")
        if self.dimension != EMBED_DIM:
            raise ValueError(f"embedding dimension is fixed at {EMBED_DIM}")

    def as_dict(self) -> dict:
        return asdict(self)


def _prepare(graph: sp.csr_matrix) -> sp.csr_matrix:
    g = sp.csr_matrix(graph, dtype=np.float64)
    g.eliminate_zeros()
    g.sort_indices()
    return g


def transition_probabilities(graph: sp.csr_matrix, prev: int | None, cur: int, p: float, q: float):
    """Next-step distribution from ``cur`` having arrived from ``prev``.

    Returns ``(neighbors, probabilities)``; empty arrays when ``cur`` has no
    positively weighted edge.
    """
    g = _prepare(graph)
    lo, hi = g.indptr[cur], g.indptr[cur + 1]
    nbr = g.indices[lo:hi]
    w = g.data[lo:hi].copy()
    if prev is not None:
        prev_nbrs = g.indices[g.indptr[prev]:g.indptr[prev + 1]]
        bias = np.where(nbr == prev, 1.0 / p, np.where(np.isin(nbr, prev_nbrs), 1.0, 1.0 / q))
        w = w * bias
    total = w.sum()
    if total <= 0:
        return nbr[:0], w[:0]
    return nbr, w / total


def simulate_walks(graph: sp.csr_matrix, params: Node2VecParams, rng: np.random.Generator) -> np.ndarray:
    """Walk matrix of shape (walks, walk_length); ``-1`` pads walks that got stuck."""
    g = _prepare(graph)
    n = g.shape[0]
    indptr, indices, data = g.indptr, g.indices, g.data
    deg = np.diff(indptr)
    edge_keys = np.repeat(np.arange(n, dtype=np.int64), deg) * n + indices
    starts = np.concatenate([rng.permutation(n) for _ in range(params.walks_per_node)]) if n else np.zeros(0, int)
    walks = np.full((len(starts), params.walk_length), -1, dtype=np.int64)
    if len(starts) == 0 or params.walk_length == 0:
        return walks
    walks[:, 0] = starts
    alive = np.flatnonzero(deg[starts] > 0)
    for step in range(1, params.walk_length):
        if len(alive) == 0:
            break
        cur = walks[alive, step - 1]
        d = deg[cur]
        seg = np.repeat(np.arange(len(alive)), d)
        offs = np.arange(len(seg)) - np.repeat(np.cumsum(d) - d, d)
        pos = np.repeat(indptr[cur], d) + offs
        cand = indices[pos]
        w = data[pos]
        if step > 1 and (params.p != 1.0 or params.q != 1.0):
            prev = walks[alive, step - 2][seg]
            key = prev * n + cand
            hit = np.searchsorted(edge_keys, key)
            linked = (hit < len(edge_keys)) & (edge_keys[np.minimum(hit, len(edge_keys) - 1)] == key)
            w = w * np.where(cand == prev, 1.0 / params.p, np.where(linked, 1.0, 1.0 / params.q))
        cum = np.cumsum(w)
        seg_end = np.cumsum(d) - 1
        seg_begin = seg_end - d + 1
        base = np.where(seg_begin > 0, cum[np.maximum(seg_begin - 1, 0)], 0.0)
        total = cum[seg_end] - base
        target = base + rng.random(len(alive)) * total
        choice = np.searchsorted(cum, target, side="right")
        choice = np.clip(choice, seg_begin, seg_end)
        walks[alive, step] = cand[choice]
        alive = alive[deg[walks[alive, step]] > 0]
    return walks


def context_pairs(walks: np.ndarray, window: int) -> np.ndarray:
    """All (center, context) pairs within ``window`` positions, both directions."""
    pairs = []
    for o in range(1, window + 1):
        if o >= walks.shape[1]:
            break
        a, b = walks[:, :-o].ravel(), walks[:, o:].ravel()
        ok = (a >= 0) & (b >= 0)
        pairs.append(np.stack([a[ok], b[ok]], axis=1))
        pairs.append(np.stack([b[ok], a[ok]], axis=1))
    return np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)


def _scatter_add(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    onehot = sp.csr_matrix((np.ones(len(rows), dtype=values.dtype), (rows, np.arange(len(rows)))), shape=(target.shape[0], len(rows)))
    target += onehot @ values


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x, dtype=x.dtype))


def skipgram(pairs: np.ndarray, n: int, params: Node2VecParams, rng: np.random.Generator) -> np.ndarray:
    """Train input vectors with negative sampling; nodes never seen as centers stay zero."""
    dim = params.dimension
    emb = np.zeros((n, dim))
    if len(pairs) == 0:
        return emb
    # float32 halves the memory traffic of the gathers, which dominate the cost
    emb = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n, dim)).astype(np.float32)
    ctx = np.zeros((n, dim), dtype=np.float32)
    freq = np.bincount(pairs[:, 1], minlength=n).astype(np.float64) ** 0.75
    noise = freq / freq.sum()
    total_steps = params.epochs * int(np.ceil(len(pairs) / params.batch_size))
    step = 0
    for _ in range(params.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), params.batch_size):
            lr = params.learning_rate * max(1e-4, 1.0 - step / total_steps)
            step += 1
            batch = pairs[order[start:start + params.batch_size]]
            c, o = batch[:, 0], batch[:, 1]
            negs = rng.choice(n, size=(len(batch), params.negative_samples), p=noise)
            targets = np.concatenate([o[:, None], negs], axis=1)
            labels = np.zeros(targets.shape, dtype=np.float32)
            labels[:, 0] = 1.0
            u = emb[c]
            v = ctx[targets]
            score = _sigmoid(np.einsum("bd,bkd->bk", u, v))
            g = (labels - score) * np.float32(lr)
            grad_u = np.einsum("bk,bkd->bd", g, v)
            grad_v = g[:, :, None] * u[:, None, :]
            _scatter_add(ctx, targets.ravel(), grad_v.reshape(-1, dim))
            _scatter_add(emb, c, grad_u)
    emb[np.bincount(pairs[:, 0], minlength=n) == 0] = 0.0
    return emb.astype(np.float64)


def random_walk_embed(graph: sp.csr_matrix, params: Node2VecParams, key: int = 0) -> np.ndarray:
    """128-d node2vec embedding per node; isolated nodes get the zero vector."""
    g = _prepare(graph)
    if g.shape[0] == 0:
        raise ValueError("cannot embed an empty graph")
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, key]))
    walks = simulate_walks(g, params, rng)
    pairs = context_pairs(walks, params.window)
    return skipgram(pairs, g.shape[0], params, rng)
