"""Small graph builders shared by the test modules."""

from __future__ import annotations

from collections import Counter

import numpy as np

from hinimp.graph import HeterogeneousGraph
from hinimp.knowledge import Node2VecParams, build_knowledge_bank
from hinimp.metapath import Metapath, commuting_matrix, enumerate_metapaths

TINY_WALKS = Node2VecParams(walks_per_node=2, walk_length=6, window=2, epochs=1, seed=0)


def make_graph(types, edges, type_names, edge_names, labels=None, features=None, labeled_types=None):
    """``edges`` is a list of (src, dst, edge_type)."""
    n = len(types)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    if labels is None:
        labels = np.full(n, np.nan)
    labels = np.asarray(labels, dtype=np.float64)
    if labeled_types is None:
        labeled_types = set(np.asarray(types)[~np.isnan(labels)].tolist())
    return HeterogeneousGraph(tuple(f"n{i}" for i in range(n)), np.asarray(types), tuple(type_names),
                              e[:, 0], e[:, 1], e[:, 2], tuple(edge_names), features, labels,
                              frozenset(labeled_types))


def random_hin(seed: int, n_max: int = 200, n_types: int = 3, n_rel: int = 4, density: float = 0.03,
               mirrored: bool = True, feature_dim: int = 0):
    """Random typed multigraph; with ``mirrored`` every relation gets an exact reverse relation."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_types, n_max + 1))
    types = np.concatenate([np.arange(n_types), rng.integers(0, n_types, size=n - n_types)])
    rels = [(int(rng.integers(n_types)), int(rng.integers(n_types))) for _ in range(n_rel)]
    src, dst, et, names = [], [], [], []
    for r, (a, b) in enumerate(rels):
        ua, ub = np.flatnonzero(types == a), np.flatnonzero(types == b)
        m = max(1, int(density * len(ua) * len(ub)))
        s = rng.choice(ua, size=m)
        d = rng.choice(ub, size=m)
        names.append(f"r{r}")
        rid = len(names) - 1
        src.append(s), dst.append(d), et.append(np.full(m, rid))
        if mirrored:
            names.append(f"r{r}_inv")
            src.append(d), dst.append(s), et.append(np.full(m, rid + 1))
    edges = np.stack([np.concatenate(src), np.concatenate(dst), np.concatenate(et)], axis=1)
    feats = rng.normal(size=(n, feature_dim)) if feature_dim else None
    return make_graph(types, edges, [f"T{t}" for t in range(n_types)], names, features=feats)


def six_node_graph():
    """Two authors, three papers, one venue; authors and papers carry labels."""
    # authors 0,1 ; papers 2,3,4 ; venue 5
    writes = [(0, 2), (0, 3), (1, 3), (1, 4)]
    pub = [(2, 5), (3, 5), (4, 5)]
    edges = [(a, p, 0) for a, p in writes] + [(p, a, 1) for a, p in writes]
    edges += [(p, v, 2) for p, v in pub] + [(v, p, 3) for p, v in pub]
    rng = np.random.default_rng(7)
    labels = [1.5, 0.75, 2.0, 0.5, 1.0, np.nan]
    return make_graph([0, 0, 1, 1, 1, 2], edges, ["author", "paper", "venue"],
                      ["writes", "written_by", "published_in", "publishes"], labels=labels,
                      features=rng.normal(size=(6, 3)))


def tiny_bank(g, params=TINY_WALKS):
    return build_knowledge_bank(g, enumerate_metapaths(g, 3), params)


def matrix_counts(g, p):
    cm = commuting_matrix(g, p)
    coo = cm.matrix.tocoo()
    return Counter({(int(cm.rows[r]), int(cm.cols[c])): int(v) for r, c, v in zip(coo.row, coo.col, coo.data)})


def random_metapath(g, rng, hops):
    by_src = {}
    for a, r, b in sorted(g.schema):
        by_src.setdefault(a, []).append((r, b))
    starts = sorted(by_src)
    nodes = [starts[rng.integers(len(starts))]]
    edges = []
    for _ in range(hops):
        options = by_src.get(nodes[-1])
        if not options:
            break
        r, b = options[rng.integers(len(options))]
        edges.append(r)
        nodes.append(b)
    if not edges:
        return None
    return Metapath(tuple(nodes), tuple(edges))
