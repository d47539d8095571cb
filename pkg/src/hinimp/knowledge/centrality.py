"""Node centralities on the unweighted simple graph of an induced sub-network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

MEASURES = ("degree", "pagerank", "eigenvector", "kcore", "closeness", "harmonic")


def degree(adj: sp.csr_matrix) -> np.ndarray:
    return np.asarray(adj.sum(axis=1)).ravel()


def pagerank(adj: sp.csr_matrix, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200,
             return_residuals: bool = False):
    """Power iteration; dangling nodes spread their mass uniformly.

    Stops once the L1 change between iterates drops below ``tol``.
    """
    n = adj.shape[0]
    if n == 0:
        return (np.zeros(0), []) if return_residuals else np.zeros(0)
    deg = degree(adj)
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    walk = sp.diags(inv) @ adj  # row-stochastic on non-dangling rows
    walk_t = walk.T.tocsr()
    dangling = deg == 0
    x = np.full(n, 1.0 / n)
    residuals = []
    for _ in range(max_iter):
        nxt = damping * (walk_t @ x + x[dangling].sum() / n) + (1.0 - damping) / n
        res = float(np.abs(nxt - x).sum())
        residuals.append(res)
        x = nxt
        if res < tol:
            break
    x = x / x.sum()
    return (x, residuals) if return_residuals else x


def eigenvector(adj: sp.csr_matrix, tol: float = 1e-14, max_iter: int = 20000) -> np.ndarray:
    """Principal eigenvector by power iteration on ``A + I``, unit L2 norm.

    The identity shift keeps bipartite graphs from oscillating without
    changing the eigenvectors; the start vector is uniform, so on graphs with
    a repeated top eigenvalue the result is the projection of the all-ones
    vector onto that eigenspace.
    """
    n = adj.shape[0]
    if n == 0:
        return np.zeros(0)
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        nxt = adj @ x + x
        nxt /= np.linalg.norm(nxt)
        if np.abs(nxt - x).max() < tol:
            x = nxt
            break
        x = nxt
    return x


def core_number(adj: sp.csr_matrix) -> np.ndarray:
    """k-core index of every node (bucket peeling, linear time)."""
    n = adj.shape[0]
    indptr, indices = adj.indptr, adj.indices
    deg = np.diff(indptr).astype(np.int64)
    if n == 0:
        return deg
    max_deg = int(deg.max())
    bin_start = np.zeros(max_deg + 2, dtype=np.int64)
    np.add.at(bin_start, deg + 1, 1)
    bin_start = np.cumsum(bin_start)[:-1]
    order = np.argsort(deg, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    deg = deg.tolist()
    order = order.tolist()
    pos = pos.tolist()
    bins = bin_start.tolist()
    for i in range(n):
        v = order[i]
        for u in indices[indptr[v]:indptr[v + 1]].tolist():
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bins[du]
                w = order[pw]
                if u != w:
                    order[pu], order[pw] = w, u
                    pos[u], pos[w] = pw, pu
                bins[du] += 1
                deg[u] -= 1
    return np.array(deg, dtype=np.int64)


def closeness_harmonic(adj: sp.csr_matrix, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """BFS-based closeness (Wasserman-Faust scaling) and harmonic centrality.

    Unreachable pairs add nothing to either sum.
    """
    n = adj.shape[0]
    close = np.zeros(n)
    harm = np.zeros(n)
    if n <= 1:
        return close, harm
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        dist = shortest_path(adj, method="D", unweighted=True, directed=False, indices=rows)
        finite = np.isfinite(dist) & (dist > 0)
        reach = finite.sum(axis=1)
        total = np.where(finite, dist, 0.0).sum(axis=1)
        harm[rows] = np.where(finite, 1.0 / np.where(finite, dist, 1.0), 0.0).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (reach / total) * (reach / (n - 1))
        close[rows] = np.where(reach > 0, c, 0.0)
    return close, harm


def minmax_columns(values: np.ndarray) -> np.ndarray:
    """Scale each column to [0, 1]; a constant column maps to 1 if positive else 0.

    Spans below ``1e-12`` of the column magnitude count as constant, so
    round-off in iterative measures is not blown up to the full range.
    """
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    span = hi - lo
    out = np.empty_like(values, dtype=np.float64)
    for j in range(values.shape[1]):
        if span[j] > 1e-12 * max(abs(hi[j]), abs(lo[j]), 1e-300):
            out[:, j] = (values[:, j] - lo[j]) / span[j]
        else:
            out[:, j] = 1.0 if hi[j] > 0 else 0.0
    return out


@dataclass
class CentralityVector:
    """Per-member centralities, columns ordered as ``MEASURES``."""

    raw: np.ndarray
    normalized: np.ndarray

    def column(self, name: str, normalized: bool = False) -> np.ndarray:
        table = self.normalized if normalized else self.raw
        return table[:, MEASURES.index(name)]


def centralities_of_adjacency(adj: sp.csr_matrix) -> CentralityVector:
    adj = sp.csr_matrix(adj, dtype=np.float64)
    adj.sort_indices()
    close, harm = closeness_harmonic(adj)
    raw = np.column_stack([degree(adj), pagerank(adj), eigenvector(adj), core_number(adj), close, harm])
    if raw.shape[0] == 0:
        return CentralityVector(raw.reshape(0, len(MEASURES)), raw.reshape(0, len(MEASURES)))
    return CentralityVector(raw, minmax_columns(raw))


def compute_centralities(s) -> CentralityVector:
    """All six measures for the members of an induced sub-network."""
    if s.size == 0:
        raise ValueError("cannot compute centralities of an empty sub-network")
    return centralities_of_adjacency(s.simple_adjacency)
