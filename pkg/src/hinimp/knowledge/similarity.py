"""Pairwise similarity graphs over an induced sub-network's members."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def pathsim(s) -> sp.csr_matrix:
    """PathSim ``2 M_uv / (M_uu + M_vv)`` over members, as a sparse matrix.

    Entries with a zero denominator are 0; the diagonal is 1 wherever the
    node has a self-instance.
    """
    m = s.counts.tocoo()
    diag = s.commuting_diag.astype(np.float64)
    denom = diag[m.row] + diag[m.col]
    vals = np.divide(2.0 * m.data, denom, out=np.zeros(len(m.data)), where=denom > 0)
    sim = sp.coo_matrix((vals, (m.row, m.col)), shape=m.shape).tocsr()
    sim.eliminate_zeros()
    return sim


def top_k_graph(sim: sp.csr_matrix, k: int = 10) -> sp.csr_matrix:
    """Keep each node's ``k`` most similar peers (self excluded); symmetrize by max."""
    sim = sim.tocsr()
    n = sim.shape[0]
    rows, cols, vals = [], [], []
    for u in range(n):
        lo, hi = sim.indptr[u], sim.indptr[u + 1]
        nbr = sim.indices[lo:hi]
        w = sim.data[lo:hi]
        keep = (nbr != u) & (w > 0)
        nbr, w = nbr[keep], w[keep]
        if len(nbr) > k:
            order = np.lexsort((nbr, -w))[:k]  # highest similarity, then lowest index
            nbr, w = nbr[order], w[order]
        rows.append(np.full(len(nbr), u))
        cols.append(nbr)
        vals.append(w)
    if n == 0:
        return sp.csr_matrix((0, 0))
    g = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    g = g.maximum(g.T).tocsr()
    g.sort_indices()
    return g


def cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; zero-norm rows give 0."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    return np.divide((a * b).sum(axis=-1), denom, out=np.zeros(np.broadcast(na, nb).shape), where=denom > 0)


def attribute_similarity_graph(s, features: np.ndarray) -> sp.csr_matrix:
    """Sub-network edges reweighted by ``max(0, cos(e'_u, e'_v))`` (local indices)."""
    if features is None:
        raise ValueError("attribute similarity needs node features")
    r, c, _ = s.local_edges
    feats = features[s.members]
    w = np.maximum(0.0, cosine(feats[r], feats[c]))
    g = sp.coo_matrix((w, (r, c)), shape=(s.size, s.size)).tocsr()
    g = g.maximum(g.T).tocsr()
    g.eliminate_zeros()
    g.sort_indices()
    return g


def similarity_embedding(f_att: np.ndarray, f_top: np.ndarray) -> np.ndarray:
    return f_att + f_top
