"""Metapath enumeration and metapath-induced sub-networks.

Path instances are counted with commuting products of per-hop typed
adjacency matrices: entry (u, v) of ``A_1 @ ... @ A_H`` is the number of
distinct typed paths from u to v.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph import HeterogeneousGraph

DENSE_LIMIT = 1000
_COUNT_LIMIT = 2 ** 62


@dataclass(frozen=True)
class Metapath:
    node_types: tuple[int, ...]
    edge_types: tuple[int, ...]

    def __post_init__(self):
        if len(self.edge_types) != len(self.node_types) - 1:
            raise ValueError(f"metapath needs {len(self.node_types) - 1} edge types, "
                             f"got {len(self.edge_types)}")

    @property
    def hops(self) -> int:
        return len(self.edge_types)

    @property
    def source_type(self) -> int:
        return self.node_types[0]

    def is_palindromic(self) -> bool:
        return self.node_types == self.node_types[::-1]

    def format(self, g: HeterogeneousGraph) -> str:
        out = g.node_type_names[self.node_types[0]]
        for r, a in zip(self.edge_types, self.node_types[1:]):
            out += f"[{g.edge_type_names[r]}]{g.node_type_names[a]}"
        return out

    def check_schema(self, g: HeterogeneousGraph) -> None:
        for i, r in enumerate(self.edge_types):
            triple = (self.node_types[i], r, self.node_types[i + 1])
            if triple not in g.schema:
                raise ValueError(f"metapath {self.format(g)}: hop {i + 1} "
                                 f"({g.node_type_names[triple[0]]}-{g.edge_type_names[r]}->"
                                 f"{g.node_type_names[triple[2]]}) does not occur in the graph")


def parse_metapath(text: str, g: HeterogeneousGraph) -> Metapath:
    """Parse ``A[writes]P[written_by]A``, or ``A-P-A`` when each hop's edge type is unique."""
    text = text.strip()
    parts = re.split(r"\[([^\]]*)\]", text)
    if len(parts) > 1:
        node_names, edge_names = parts[0::2], parts[1::2]
    else:
        node_names, edge_names = text.split("-"), []
    node_names = [n.strip() for n in node_names]
    if len(node_names) < 2 or not all(node_names):
        raise ValueError(f"cannot parse metapath {text!r}")
    nodes = [g.node_type_id(n) for n in node_names]
    if edge_names:
        edges = [g.edge_type_id(e.strip()) for e in edge_names]
    else:
        edges = []
        for a, b in zip(nodes, nodes[1:]):
            candidates = sorted(r for (x, r, y) in g.schema if x == a and y == b)
            if len(candidates) != 1:
                raise ValueError(f"metapath {text!r}: edge type from {g.node_type_names[a]} to "
                                 f"{g.node_type_names[b]} is ambiguous or missing; use brackets")
            edges.append(candidates[0])
    p = Metapath(tuple(nodes), tuple(edges))
    p.check_schema(g)
    return p


def parse_metapaths(text: str, g: HeterogeneousGraph) -> list[Metapath]:
    return [parse_metapath(part, g) for part in text.split(",") if part.strip()]


def mirror_relations(g: HeterogeneousGraph) -> dict[int, frozenset[int]]:
    """Map each edge type to the edge types whose edge set is its exact transpose."""
    n = max(g.node_count, 1)
    keys = {}
    for r in range(g.num_edge_types):
        mask = g.edge_types == r
        s, d = g.edge_src[mask], g.edge_dst[mask]
        keys[r] = (np.unique(s * n + d), np.unique(d * n + s))
    out = {}
    for r in range(g.num_edge_types):
        out[r] = frozenset(r2 for r2 in range(g.num_edge_types)
                           if len(keys[r][1]) == len(keys[r2][0]) and np.array_equal(keys[r][1], keys[r2][0]))
    return out


def enumerate_metapaths(g: HeterogeneousGraph, max_nodes: int = 3) -> list[Metapath]:
    """All symmetric metapaths with at most ``max_nodes`` node slots.

    Symmetric means a palindromic node-type sequence whose edge types mirror
    each other (hop ``i`` and hop ``H+1-i`` are transposes in the data).
    """
    if max_nodes < 2:
        return []
    mirror = mirror_relations(g)
    by_src: dict[int, list[tuple[int, int]]] = {}
    for a, r, b in sorted(g.schema):
        by_src.setdefault(a, []).append((r, b))
    found = []

    def extend(nodes, edges):
        if len(nodes) >= 2 and nodes == nodes[::-1]:
            h = len(edges)
            if all(edges[h - 1 - i] in mirror[edges[i]] for i in range(h)):
                found.append(Metapath(tuple(nodes), tuple(edges)))
        if len(nodes) == max_nodes:
            return
        for r, b in by_src.get(nodes[-1], []):
            extend(nodes + [b], edges + [r])

    for a in range(g.num_node_types):
        extend([a], [])
    return sorted(found, key=lambda p: p.format(g))


def hop_matrix(g: HeterogeneousGraph, src_type: int, etype: int, dst_type: int) -> sp.csr_matrix:
    rows = g.nodes_of_type(src_type)
    cols = g.nodes_of_type(dst_type)
    row_pos = np.full(g.node_count, -1)
    col_pos = np.full(g.node_count, -1)
    row_pos[rows] = np.arange(len(rows))
    col_pos[cols] = np.arange(len(cols))
    mask = (g.edge_types == etype) & (row_pos[g.edge_src] >= 0) & (col_pos[g.edge_dst] >= 0)
    data = np.ones(int(mask.sum()), dtype=np.int64)
    m = sp.coo_matrix((data, (row_pos[g.edge_src[mask]], col_pos[g.edge_dst[mask]])),
                      shape=(len(rows), len(cols)), dtype=np.int64)
    return m.tocsr()  # duplicate coordinates are summed: parallel edges are distinct instances


@dataclass
class CommutingMatrix:
    matrix: sp.csr_matrix
    rows: np.ndarray
    cols: np.ndarray


def commuting_matrix(g: HeterogeneousGraph, p: Metapath) -> CommutingMatrix:
    """Exact path-instance counts between source-type and target-type nodes."""
    p.check_schema(g)
    hops = [hop_matrix(g, p.node_types[i], r, p.node_types[i + 1]) for i, r in enumerate(p.edge_types)]
    bound = 1
    for h in hops:
        bound *= max(int(h.sum(axis=1).max()) if h.shape[0] and h.nnz else 0, 1)
    dense = hops[0].shape[0] < DENSE_LIMIT
    m = hops[0].toarray() if dense else hops[0]
    check = m.astype(np.float64) if bound >= _COUNT_LIMIT else None
    for h in hops[1:]:
        m = m @ (h.toarray() if dense else h)
        if check is not None:
            check = check @ h.astype(np.float64)
    if check is not None and check.size and float(check.max()) >= _COUNT_LIMIT:
        raise OverflowError(f"path-instance counts exceed the int64 range for metapath {p.format(g)}")
    m = sp.csr_matrix(m, dtype=np.int64)
    m.eliminate_zeros()
    return CommutingMatrix(m, g.nodes_of_type(p.node_types[0]), g.nodes_of_type(p.node_types[-1]))


@dataclass(eq=False)
class InducedSubnetwork:
    """Same-type graph linking nodes joined by at least one metapath instance.

    ``counts`` is the commuting matrix restricted to ``members`` (local
    indices), diagonal included; edges exclude self-instances.
    """

    metapath_index: int
    node_type: int
    metapath: Metapath
    members: np.ndarray
    counts: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.members)

    @cached_property
    def commuting_diag(self) -> np.ndarray:
        return np.asarray(self.counts.diagonal(), dtype=np.int64)

    @cached_property
    def weighted_edges(self) -> np.ndarray:
        """``(E, 3)`` array of (u, v, count) in global node ids, u != v."""
        coo = self.counts.tocoo()
        off = coo.row != coo.col
        return np.stack([self.members[coo.row[off]], self.members[coo.col[off]], coo.data[off]],
                        axis=1).astype(np.int64).reshape(-1, 3)

    @cached_property
    def local_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.counts.tocoo()
        off = coo.row != coo.col
        return coo.row[off].astype(np.int64), coo.col[off].astype(np.int64), coo.data[off]

    @cached_property
    def simple_adjacency(self) -> sp.csr_matrix:
        """Unweighted undirected simple graph over members (0/1, zero diagonal)."""
        r, c, _ = self.local_edges
        a = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(self.size, self.size)).tocsr()
        a = ((a + a.T) > 0).astype(np.float64)
        a.setdiag(0)
        a.eliminate_zeros()
        return a.tocsr()

    def local_index(self) -> dict[int, int]:
        return {int(v): i for i, v in enumerate(self.members)}


def induce_subnetwork(g: HeterogeneousGraph, p: Metapath, index: int = 0) -> InducedSubnetwork:
    if p.node_types[0] != p.node_types[-1]:
        raise ValueError("an induced sub-network needs a metapath that starts and ends on the same type")
    cm = commuting_matrix(g, p)
    m = cm.matrix
    touched = np.zeros(m.shape[0], dtype=bool)
    touched[np.diff(m.indptr) > 0] = True
    touched[np.unique(m.indices)] = True
    keep = np.flatnonzero(touched)
    counts = m[keep][:, keep].tocsr()
    counts.sort_indices()
    return InducedSubnetwork(index, p.node_types[0], p, cm.rows[keep], counts)
