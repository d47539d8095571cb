"""Heterogeneous information network: data model, TSV I/O, validation, synthesis."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed input file; carries the offending path and line number."""

    def __init__(self, path, lineno: int | None, message: str):
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.lineno = lineno


class GraphValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid graph: " + "; ".join(violations))
        self.violations = violations


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class HeterogeneousGraph:
    """Directed typed multigraph with optional features and partial labels.

    Node ids are dense ``0..N-1``; ``node_ids`` keeps the original string ids.
    ``labels`` is NaN for unlabeled nodes.
    """

    node_ids: tuple[str, ...]
    node_types: np.ndarray
    node_type_names: tuple[str, ...]
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_types: np.ndarray
    edge_type_names: tuple[str, ...]
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    labeled_types: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        n = len(self.node_ids)
        object.__setattr__(self, "node_types", _frozen(np.asarray(self.node_types, dtype=np.int64)))
        for name in ("edge_src", "edge_dst", "edge_types"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))
        if self.features is not None:
            object.__setattr__(self, "features", _frozen(np.asarray(self.features, dtype=np.float64)))
        labels = np.full(n, np.nan) if self.labels is None else np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "labeled_types", frozenset(int(t) for t in self.labeled_types))

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def edge_count(self) -> int:
        return len(self.edge_src)

    @property
    def num_node_types(self) -> int:
        return len(self.node_type_names)

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @cached_property
    def id_index(self) -> dict[str, int]:
        return {nid: i for i, nid in enumerate(self.node_ids)}

    def node_type_id(self, name: str) -> int:
        try:
            return self.node_type_names.index(name)
        except ValueError:
            raise KeyError(f"unknown node type {name!r}") from None

    def edge_type_id(self, name: str) -> int:
        try:
            return self.edge_type_names.index(name)
        except ValueError:
            raise KeyError(f"unknown edge type {name!r}") from None

    def nodes_of_type(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.node_types == t)

    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(~np.isnan(self.labels))

    @cached_property
    def schema(self) -> frozenset[tuple[int, int, int]]:
        """Set of (src_type, edge_type, dst_type) triples present in the data."""
        if self.edge_count == 0:
            return frozenset()
        triples = np.stack([self.node_types[self.edge_src], self.edge_types,
                            self.node_types[self.edge_dst]], axis=1)
        return frozenset(map(tuple, np.unique(triples, axis=0).tolist()))

    def degree(self, direction: str = "both") -> np.ndarray:
        out_deg = np.bincount(self.edge_src, minlength=self.node_count)
        in_deg = np.bincount(self.edge_dst, minlength=self.node_count)
        return {"out": out_deg, "in": in_deg, "both": out_deg + in_deg}[direction]

    def with_features(self, features: np.ndarray) -> "HeterogeneousGraph":
        return HeterogeneousGraph(self.node_ids, self.node_types, self.node_type_names, self.edge_src,
                                  self.edge_dst, self.edge_types, self.edge_type_names, features,
                                  self.labels, self.labeled_types)

    def fingerprint(self) -> str:
        """Content hash used for cache invalidation."""
        h = hashlib.sha256()
        for arr in (self.node_types, self.edge_src, self.edge_dst, self.edge_types, self.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.features is not None:
            h.update(self.features.tobytes())
        h.update("\x00".join(self.node_ids + self.node_type_names + self.edge_type_names).encode())
        return h.hexdigest()[:16]


def typed_neighbors(g: HeterogeneousGraph, v: int, direction: str = "both") -> list[tuple[int, int]]:
    """Neighbors of ``v`` as ``(neighbor, edge_type)`` sorted by neighbor then type.

    ``both`` keeps duplicates: a node linked in both directions appears twice.
    """
    if not 0 <= v < g.node_count:
        raise IndexError(f"node {v} out of range for graph with {g.node_count} nodes")
    if direction not in ("in", "out", "both"):
        raise ValueError(f"direction must be 'in', 'out' or 'both', got {direction!r}")
    pairs: list[tuple[int, int]] = []
    if direction in ("out", "both"):
        mask = g.edge_src == v
        pairs += list(zip(g.edge_dst[mask].tolist(), g.edge_types[mask].tolist()))
    if direction in ("in", "both"):
        mask = g.edge_dst == v
        pairs += list(zip(g.edge_src[mask].tolist(), g.edge_types[mask].tolist()))
    return sorted(pairs)


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(g: HeterogeneousGraph) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    v: list[str] = []
    n = g.node_count
    if g.num_node_types + g.num_edge_types <= 2:
        v.append(f"|A|+|R|>2 fails: {g.num_node_types} node types + {g.num_edge_types} edge types")
    if len(g.node_types) != n:
        v.append(f"node type map has {len(g.node_types)} entries for {n} nodes")
    elif n and (g.node_types.min() < 0 or g.node_types.max() >= g.num_node_types):
        v.append("node type id outside the node type registry")
    if len(set(g.node_ids)) != n:
        v.append("duplicate node ids")
    if not (len(g.edge_src) == len(g.edge_dst) == len(g.edge_types)):
        v.append("edge arrays have different lengths")
    else:
        bad = np.flatnonzero((g.edge_src < 0) | (g.edge_src >= n) | (g.edge_dst < 0) | (g.edge_dst >= n))
        for e in bad[:10]:
            v.append(f"edge {int(e)} references node outside 0..{n - 1}")
        if len(bad) > 10:
            v.append(f"... {len(bad) - 10} more dangling edges")
        bad_t = np.flatnonzero((g.edge_types < 0) | (g.edge_types >= g.num_edge_types))
        for e in bad_t[:10]:
            v.append(f"edge {int(e)} has edge type outside the edge type registry")
    if len(g.labels) != n:
        v.append(f"label array has {len(g.labels)} entries for {n} nodes")
    else:
        labeled = g.labeled_nodes()
        stray = [int(i) for i in labeled if int(g.node_types[i]) not in g.labeled_types]
        if stray:
            v.append(f"{len(stray)} labeled nodes have a type outside labeled_types (first: node {stray[0]})")
    if g.features is not None:
        if g.features.ndim != 2 or g.features.shape[0] != n:
            v.append(f"feature matrix shape {g.features.shape} does not match {n} nodes")
        elif not np.all(np.isfinite(g.features)):
            v.append("non-finite feature values")
    return ValidationReport(v)


# ---------------------------------------------------------------- TSV I/O

def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_graph(nodes_path, edges_path, features_path=None) -> HeterogeneousGraph:
    """Read the nodes/edges/(features) TSV triple into a validated graph.

    Type names get ids in first-seen order. Files are taken verbatim: a
    symmetric relation must be listed in both directions by the producer.
    """
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    ids: list[str] = []
    index: dict[str, int] = {}
    ntype_names: list[str] = []
    ntype_index: dict[str, int] = {}
    ntypes: list[int] = []
    labels: list[float] = []
    for lineno, line in _data_lines(nodes_path):
        parts = line.split("\t")
        if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
            raise GraphFormatError(nodes_path, lineno, "expected 'orig_id<TAB>type_name<TAB>[importance]'")
        nid, tname = parts[0], parts[1]
        if nid in index:
            raise GraphFormatError(nodes_path, lineno, f"duplicate node id {nid!r}")
        value = parts[2].strip() if len(parts) == 3 else ""
        try:
            label = float(value) if value else math.nan
        except ValueError:
            raise GraphFormatError(nodes_path, lineno, f"importance {value!r} is not a number") from None
        index[nid] = len(ids)
        ids.append(nid)
        if tname not in ntype_index:
            ntype_index[tname] = len(ntype_names)
            ntype_names.append(tname)
        ntypes.append(ntype_index[tname])
        labels.append(label)

    etype_names: list[str] = []
    etype_index: dict[str, int] = {}
    src, dst, et = [], [], []
    for lineno, line in _data_lines(edges_path):
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise GraphFormatError(edges_path, lineno, "expected 'src_orig_id<TAB>dst_orig_id<TAB>edge_type_name'")
        for endpoint in parts[:2]:
            if endpoint not in index:
                raise GraphFormatError(edges_path, lineno, f"dangling edge endpoint {endpoint!r}")
        if parts[2] not in etype_index:
            etype_index[parts[2]] = len(etype_names)
            etype_names.append(parts[2])
        src.append(index[parts[0]])
        dst.append(index[parts[1]])
        et.append(etype_index[parts[2]])

    features = None
    if features_path is not None:
        features_path = Path(features_path)
        rows: dict[int, np.ndarray] = {}
        dim = None
        for lineno, line in _data_lines(features_path):
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphFormatError(features_path, lineno, "expected 'orig_id<TAB>f1,f2,...,fF'")
            if parts[0] not in index:
                raise GraphFormatError(features_path, lineno, f"unknown node id {parts[0]!r}")
            try:
                vec = np.array([float(x) for x in parts[1].split(",")])
            except ValueError:
                raise GraphFormatError(features_path, lineno, "non-numeric feature value") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise GraphFormatError(features_path, lineno,
                                       f"feature dimension mismatch: expected {dim}, got {len(vec)}")
            rows[index[parts[0]]] = vec
        if len(rows) != len(ids):
            missing = next(ids[i] for i in range(len(ids)) if i not in rows)
            raise GraphFormatError(features_path, None,
                                   f"{len(ids) - len(rows)} nodes lack features (first: {missing!r})")
        features = np.stack([rows[i] for i in range(len(ids))]) if ids else np.zeros((0, dim or 0))

    lab = np.array(labels, dtype=np.float64)
    ntype_arr = np.array(ntypes, dtype=np.int64)
    labeled_types = frozenset(np.unique(ntype_arr[~np.isnan(lab)]).tolist())
    g = HeterogeneousGraph(tuple(ids), ntype_arr, tuple(ntype_names), np.array(src, dtype=np.int64),
                           np.array(dst, dtype=np.int64), np.array(et, dtype=np.int64), tuple(etype_names),
                           features, lab, labeled_types)
    report = validate(g)
    if not report.ok:
        raise GraphValidationError(report.violations)
    return g


def save_graph(g: HeterogeneousGraph, nodes_path, edges_path, features_path=None) -> None:
    """Write the TSV triple; ``load_graph`` on the output reproduces ``g``."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        fh.write("# orig_id\ttype_name\timportance\n")
        for i, nid in enumerate(g.node_ids):
            y = g.labels[i]
            fh.write(f"{nid}\t{g.node_type_names[g.node_types[i]]}\t{'' if np.isnan(y) else repr(float(y))}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("# src_orig_id\tdst_orig_id\tedge_type_name\n")
        for s, d, t in zip(g.edge_src.tolist(), g.edge_dst.tolist(), g.edge_types.tolist()):
            fh.write(f"{g.node_ids[s]}\t{g.node_ids[d]}\t{g.edge_type_names[t]}\n")
    if features_path is not None and g.features is not None:
        with open(features_path, "w", encoding="utf-8") as fh:
            fh.write("# orig_id\tf1,f2,...,fF\n")
            for nid, row in zip(g.node_ids, g.features):
                fh.write(nid + "\t" + ",".join(repr(float(x)) for x in row) + "\n")


def random_features(node_count: int, dim: int, seed: int) -> np.ndarray:
    """Stand-in initial features, uniform in [-0.5, 0.5]."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFEA7]))
    return rng.uniform(-0.5, 0.5, size=(node_count, dim))


def ensure_features(g: HeterogeneousGraph, dim: int, seed: int) -> HeterogeneousGraph:
    if g.features is not None:
        return g
    return g.with_features(random_features(g.node_count, dim, seed))


# ---------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class EdgeRule:
    """Each node of type ``anchor`` draws ``m`` distinct partners of the other endpoint type.

    ``attach='preferential'`` weights partners by (current degree in this
    relation + 1). ``inverse`` names an edge type added in the reverse direction.
    """

    name: str
    src_type: str
    dst_type: str
    m: int
    anchor: str
    attach: str = "uniform"
    inverse: str | None = None


@dataclass(frozen=True)
class SyntheticSpec:
    node_counts: dict[str, int]
    edge_rules: tuple[EdgeRule, ...]
    feature_dim: int = 16
    labeled_types: tuple[str, ...] = ()
    label_offset: float = 0.0
    label_scale: float = 1.0
    noise: float = 0.0
    noise_relative: bool = False
    seed: int = 0

    def check(self) -> None:
        if len(self.node_counts) < 2:
            raise ValueError("synthetic spec needs at least 2 node types")
        if not self.edge_rules:
            raise ValueError("synthetic spec needs at least 1 edge rule")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")
        for t in self.labeled_types:
            if t not in self.node_counts:
                raise ValueError(f"labeled type {t!r} is not a node type")
        for r in self.edge_rules:
            for t in (r.src_type, r.dst_type):
                if t not in self.node_counts:
                    raise ValueError(f"edge rule {r.name!r}: unknown node type {t!r}")
            if r.anchor not in (r.src_type, r.dst_type):
                raise ValueError(f"edge rule {r.name!r}: anchor must be an endpoint type")
            if r.attach not in ("uniform", "preferential"):
                raise ValueError(f"edge rule {r.name!r}: attach must be uniform or preferential")
            other = r.dst_type if r.anchor == r.src_type else r.src_type
            if self.node_counts[r.anchor] > 0 and self.node_counts[other] == 0:
                raise ValueError(f"edge rule {r.name!r}: no {other!r} nodes to attach to")
            if r.m > self.node_counts[other] - (1 if other == r.anchor else 0):
                raise ValueError(f"edge rule {r.name!r}: m={r.m} exceeds available partners")


def generate_synthetic(spec: SyntheticSpec) -> HeterogeneousGraph:
    """Build a seeded random HIN whose labels are an affine function of total degree."""
    spec.check()
    rng = np.random.default_rng(spec.seed)
    type_names = tuple(spec.node_counts)
    offsets, ids, types = {}, [], []
    for t, name in enumerate(type_names):
        offsets[name] = len(ids)
        ids += [f"{name}{i}" for i in range(spec.node_counts[name])]
        types += [t] * spec.node_counts[name]

    edge_names: list[str] = []
    src: list[np.ndarray] = []
    dst: list[np.ndarray] = []
    et: list[np.ndarray] = []

    def etype(name: str) -> int:
        if name not in edge_names:
            edge_names.append(name)
        return edge_names.index(name)

    for rule in spec.edge_rules:
        other = rule.dst_type if rule.anchor == rule.src_type else rule.src_type
        n_anchor, n_other = spec.node_counts[rule.anchor], spec.node_counts[other]
        counts = np.zeros(n_other)
        pairs = []
        for a in range(n_anchor):
            if rule.attach == "uniform":
                w = np.ones(n_other)
            else:
                w = counts + 1.0
            if other == rule.anchor:
                w[a] = 0.0
            chosen = rng.choice(n_other, size=rule.m, replace=False, p=w / w.sum())
            counts[chosen] += 1
            pairs += [(a, int(b)) for b in np.sort(chosen)]
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        anchor_ids = arr[:, 0] + offsets[rule.anchor]
        other_ids = arr[:, 1] + offsets[other]
        s, d = (anchor_ids, other_ids) if rule.anchor == rule.src_type else (other_ids, anchor_ids)
        src.append(s)
        dst.append(d)
        et.append(np.full(len(s), etype(rule.name)))
        if rule.inverse:
            src.append(d)
            dst.append(s)
            et.append(np.full(len(s), etype(rule.inverse)))

    node_types = np.array(types, dtype=np.int64)
    edge_src = np.concatenate(src)
    edge_dst = np.concatenate(dst)
    degree = np.bincount(edge_src, minlength=len(ids)) + np.bincount(edge_dst, minlength=len(ids))

    labels = np.full(len(ids), np.nan)
    labeled_types = frozenset(type_names.index(t) for t in spec.labeled_types)
    mask = np.isin(node_types, list(labeled_types))
    clean = spec.label_offset + spec.label_scale * degree[mask].astype(float)
    sd = spec.noise * (clean.std() if spec.noise_relative else 1.0)
    labels[mask] = clean + (rng.normal(0.0, sd, size=clean.shape) if sd > 0 else 0.0)

    features = rng.uniform(-0.5, 0.5, size=(len(ids), spec.feature_dim)) if spec.feature_dim else None
    g = HeterogeneousGraph(tuple(ids), node_types, type_names, edge_src, edge_dst, np.concatenate(et),
                           tuple(edge_names), features, labels, labeled_types)
    report = validate(g)
    if not report.ok:
        raise GraphValidationError(report.violations)
    return g


def bibliographic_spec(seed: int = 0, authors: int = 300, papers: int = 650, venues: int = 50,
                       authors_per_paper: int = 3, feature_dim: int = 16, noise: float = 0.05,
                       label_offset: float = 1.0, label_scale: float = 0.25) -> SyntheticSpec:
    """Three-type author/paper/venue network labelling authors by total degree."""
    rules = (
        EdgeRule("writes", "author", "paper", authors_per_paper, anchor="paper", inverse="written_by"),
        EdgeRule("published_in", "paper", "venue", 1, anchor="paper", attach="preferential",
                 inverse="publishes"),
    )
    return SyntheticSpec({"author": authors, "paper": papers, "venue": venues}, rules, feature_dim,
                         ("author",), label_offset, label_scale, noise, noise_relative=True, seed=seed)


def homogenize(g: HeterogeneousGraph) -> HeterogeneousGraph:
    """Collapse all node types into one and all edge types into one.

    Labels are kept; the single node type becomes the only labeled type.
    """
    return HeterogeneousGraph(g.node_ids, np.zeros(g.node_count, dtype=np.int64), ("node",), g.edge_src,
                              g.edge_dst, np.zeros(g.edge_count, dtype=np.int64), ("edge",), g.features,
                              g.labels, frozenset({0}) if g.labeled_types else frozenset())


def type_counts(g: HeterogeneousGraph) -> dict[str, int]:
    return {name: int((g.node_types == t).sum()) for t, name in enumerate(g.node_type_names)}


def summarize(g: HeterogeneousGraph) -> dict:
    return {"nodes": g.node_count, "edges": g.edge_count, "node_types": g.num_node_types,
            "edge_types": g.num_edge_types, "labeled": int(len(g.labeled_nodes())),
            "per_type": type_counts(g)}
