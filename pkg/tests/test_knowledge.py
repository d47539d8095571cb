import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hinimp import autodiff as ad
from hinimp.knowledge import (NUM_SLOTS, Node2VecParams, Perceptron, bank_manifest, build_knowledge_bank,
                              disable_knowledge, load_bank, save_bank)
from hinimp.knowledge.bank import slot_embeddings, vectorize_centrality
from hinimp.knowledge.node2vec import (context_pairs, random_walk_embed, simulate_walks, skipgram,
                                       transition_probabilities)
from hinimp.knowledge.similarity import attribute_similarity_graph, cosine, pathsim, top_k_graph
from hinimp.metapath import Metapath, enumerate_metapaths, induce_subnetwork

from _hin import TINY_WALKS, random_hin, six_node_graph, tiny_bank


def cycle(n):
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1
    return sp.csr_matrix(a)


# ---------------------------------------------------------------- similarity

def test_pathsim_formula():
    g = random_hin(9, n_max=80, n_types=2, n_rel=2, density=0.1)
    p = next(p for p in enumerate_metapaths(g, 3) if p.hops == 2)
    s = induce_subnetwork(g, p)
    m = s.counts.toarray().astype(float)
    sim = pathsim(s).toarray()
    for u in range(s.size):
        for v in range(s.size):
            den = m[u, u] + m[v, v]
            want = 2 * m[u, v] / den if den > 0 else 0.0
            assert sim[u, v] == pytest.approx(want, abs=1e-15)
    np.testing.assert_allclose(sim, sim.T)
    assert sim.max() <= 1.0 + 1e-12


def test_top_k_keeps_best_peers():
    sim = sp.csr_matrix(np.array([[1.0, 0.9, 0.5, 0.5, 0.1],
                                  [0.9, 1.0, 0.2, 0.0, 0.0],
                                  [0.5, 0.2, 1.0, 0.0, 0.0],
                                  [0.5, 0.0, 0.0, 1.0, 0.0],
                                  [0.1, 0.0, 0.0, 0.0, 1.0]]))
    g = top_k_graph(sim, k=2).toarray()
    assert np.all(np.diag(g) == 0)
    np.testing.assert_array_equal(g, g.T)
    # node 0 keeps 1 and 2 (tie 0.5 broken towards the lower index); 3 and 4 link back by symmetry
    assert g[0, 1] == 0.9 and g[0, 2] == 0.5 and g[0, 3] == 0.5 and g[0, 4] == 0.1


def test_cosine_graph_clips_negative():
    assert cosine(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]))[0] == 0.0
    g = six_node_graph()
    s = induce_subnetwork(g, Metapath((1, 0, 1), (1, 0)))
    w = attribute_similarity_graph(s, g.features)
    assert w.min() >= 0
    for u, v in zip(*w.nonzero()):
        a, b = g.features[s.members[u]], g.features[s.members[v]]
        assert w[u, v] == pytest.approx(max(0.0, a @ b / np.linalg.norm(a) / np.linalg.norm(b)))
    with pytest.raises(ValueError):
        attribute_similarity_graph(s, None)


# ---------------------------------------------------------------- node2vec

@given(st.integers(0, 1000), st.floats(0.25, 4.0), st.floats(0.25, 4.0))
def test_transition_probabilities_sum_to_one(seed, p, q):
    g = random_hin(seed, n_max=20, n_types=1, n_rel=1, density=0.3)
    a = sp.csr_matrix((np.ones(g.edge_count), (g.edge_src, g.edge_dst)), shape=(g.node_count,) * 2)
    a = ((a + a.T) > 0).astype(float)
    for cur in range(a.shape[0]):
        nbr, prob = transition_probabilities(a, None, cur, p, q)
        if len(nbr):
            assert prob.sum() == pytest.approx(1.0, abs=1e-12)
            for prev in nbr[:2]:
                _, prob2 = transition_probabilities(a, prev, cur, p, q)
                assert prob2.sum() == pytest.approx(1.0, abs=1e-12)


def test_return_and_inout_biases():
    # 0-1, 1-2, 1-3, 2-3: from 1 having come from 2, neighbors are 0 (far), 2 (return), 3 (shared)
    a = np.zeros((4, 4))
    for u, v in [(0, 1), (1, 2), (1, 3), (2, 3)]:
        a[u, v] = a[v, u] = 1
    nbr, prob = transition_probabilities(sp.csr_matrix(a), 2, 1, p=2.0, q=0.5)
    w = {0: 1 / 0.5, 2: 1 / 2.0, 3: 1.0}
    total = sum(w.values())
    assert dict(zip(nbr.tolist(), prob.tolist())) == pytest.approx({k: v / total for k, v in w.items()})


def test_walks_follow_edges_and_are_seeded():
    a = cycle(6)
    params = Node2VecParams(walks_per_node=3, walk_length=7, p=0.5, q=2.0)
    w1 = simulate_walks(a, params, np.random.default_rng(1))
    w2 = simulate_walks(a, params, np.random.default_rng(1))
    np.testing.assert_array_equal(w1, w2)
    assert w1.shape == (18, 7)
    assert sorted(np.bincount(w1[:, 0])) == [3] * 6
    steps = np.abs(np.diff(w1, axis=1)) % 4
    assert set(steps.ravel().tolist()) == {1}  # 1 or 5 apart on a 6-cycle


def test_stuck_walks_are_padded():
    a = sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float))
    w = simulate_walks(a, Node2VecParams(walks_per_node=1, walk_length=4), np.random.default_rng(0))
    row = w[w[:, 0] == 2][0]
    np.testing.assert_array_equal(row, [2, -1, -1, -1])
    pairs = context_pairs(w, 2)
    assert (pairs >= 0).all() and not (pairs == 2).any()


def test_context_pairs_window():
    pairs = context_pairs(np.array([[0, 1, 2]]), 1)
    assert sorted(map(tuple, pairs.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_skipgram_separates_communities():
    # two 5-cliques joined by one edge
    a = np.zeros((10, 10))
    for block in (range(5), range(5, 10)):
        for i in block:
            for j in block:
                if i != j:
                    a[i, j] = 1
    a[4, 5] = a[5, 4] = 1
    params = Node2VecParams(walks_per_node=20, walk_length=10, window=3, epochs=3, seed=3)
    emb = random_walk_embed(sp.csr_matrix(a), params)
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    sim = unit @ unit.T
    within = np.mean([sim[i, j] for i in range(5) for j in range(5) if i != j])
    across = np.mean([sim[i, j] for i in range(5) for j in range(5, 10)])
    assert within > across


def test_cycle_embedding_is_rotation_symmetric():
    # on a vertex-transitive graph every node's embedding has a similar norm
    params = Node2VecParams(walks_per_node=30, walk_length=12, window=2, epochs=2, seed=0)
    emb = random_walk_embed(cycle(4), params)
    norms = np.linalg.norm(emb, axis=1)
    assert norms.std() / norms.mean() < 0.15


def test_isolated_node_gets_zero_and_seed_is_stable():
    a = sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float))
    e1 = random_walk_embed(a, TINY_WALKS, key=4)
    e2 = random_walk_embed(a, TINY_WALKS, key=4)
    np.testing.assert_array_equal(e1, e2)
    assert e1.shape == (3, 128)
    np.testing.assert_array_equal(e1[2], 0.0)
    assert not np.array_equal(e1, random_walk_embed(a, TINY_WALKS, key=5))
    assert skipgram(np.zeros((0, 2), dtype=int), 3, TINY_WALKS, np.random.default_rng(0)).shape == (3, 128)


def test_params_validation():
    with pytest.raises(ValueError):
        Node2VecParams(p=0)
    with pytest.raises(ValueError):
        Node2VecParams(dimension=64)


# ---------------------------------------------------------------- bank

def test_bank_shapes_and_perceptron():
    g = six_node_graph()
    bank = tiny_bank(g)
    assert [s.name for s in bank.subnets][0] == "author[writes]paper[written_by]author"
    for s in bank.subnets:
        assert s.centrality.shape == (s.size, NUM_SLOTS - 1)
        assert s.similarity.shape == (s.size, 128)
        assert s.mask.all()
        assert ((0 <= s.centrality) & (s.centrality <= 1)).all()
    mlps = [Perceptron.init(np.random.default_rng(l), name=f"p{l}") for l in range(NUM_SLOTS - 1)]
    assert vectorize_centrality(0.3, 2, mlps).shape == (128,)
    assert vectorize_centrality(np.array([0.1, 0.2]), 2, mlps).shape == (2, 128)
    with pytest.raises(IndexError):
        vectorize_centrality(0.3, 6, mlps)
    slots = slot_embeddings(bank.subnets[0], mlps)
    assert len(slots) == NUM_SLOTS and all(t.shape == (2, 128) for t in slots)


def test_disable_knowledge_exact_count():
    g = random_hin(2, n_max=60, n_types=2, n_rel=2, density=0.1, feature_dim=4)
    bank = tiny_bank(g)
    total = bank.total_slots()
    for frac in (0.0, 0.2, 0.5, 1.0):
        off = disable_knowledge(bank, frac, seed=1)
        assert off.disabled_slots() == round(frac * total)
    a, b = disable_knowledge(bank, 0.4, 3), disable_knowledge(bank, 0.4, 3)
    assert all(np.array_equal(x.mask, y.mask) for x, y in zip(a.subnets, b.subnets))
    assert bank.disabled_slots() == 0  # original untouched
    slots = slot_embeddings(disable_knowledge(bank, 1.0, 0).subnets[0],
                            [Perceptron.init(np.random.default_rng(0)) for _ in range(6)])
    assert all(np.all(t.data == 0) for t in slots)
    with pytest.raises(ValueError):
        disable_knowledge(bank, 1.5, 0)


def test_bank_cache_roundtrip(tmp_path):
    g = six_node_graph()
    paths = enumerate_metapaths(g, 3)
    bank = build_knowledge_bank(g, paths, TINY_WALKS)
    save_bank(bank, tmp_path)
    manifest = bank_manifest(g, paths, TINY_WALKS, 10)
    loaded = load_bank(tmp_path, manifest)
    assert loaded is not None
    for a, b in zip(bank.subnets, loaded.subnets):
        assert a.name == b.name and a.metapath == b.metapath
        np.testing.assert_array_equal(a.similarity, b.similarity)
        np.testing.assert_array_equal(a.centrality, b.centrality)
    other = bank_manifest(g, paths, Node2VecParams(walks_per_node=3), 10)
    assert load_bank(tmp_path, other) is None
    assert load_bank(tmp_path / "missing") is None


def test_bank_is_deterministic():
    g = six_node_graph()
    a, b = tiny_bank(g), tiny_bank(g)
    for x, y in zip(a.subnets, b.subnets):
        np.testing.assert_array_equal(x.similarity, y.similarity)


def test_bank_needs_features():
    g = random_hin(1, n_max=20)
    with pytest.raises(ValueError, match="features"):
        build_knowledge_bank(g, enumerate_metapaths(g, 3), TINY_WALKS)


def test_perceptron_is_differentiable():
    mlp = Perceptron.init(np.random.default_rng(0))
    loss = ad.sum(mlp(np.array([0.2, 0.7])))
    loss.backward()
    assert mlp.Wa.grad is not None and mlp.bb.grad.shape == (128,)
