import json

import numpy as np
import pytest

from hinimp.model import ImportanceModel, ModelConfig, Trace
from hinimp.ot import wasserstein_embed_array

from _hin import make_graph, six_node_graph, tiny_bank
from oracles import model_gradient_errors

SMALL = dict(heads=2, head_dim=4, attention_hidden=8, mlp_hidden=8)


@pytest.fixture(scope="module")
def fixture6():
    g = six_node_graph()
    return g, tiny_bank(g)


def expected_count(variant, F, R, D=128, M=4, d=32, h=64, mlp=64):
    """Parameter count assembled by hand from the layer shapes."""
    perceptrons = 6 * (D + D + D * D + D)
    fusion = 2 * (h + D * h + h)
    md = M * d
    encoder = (F + D) * md + M * 3 * d * d + R * (d * d + 1) + md * md
    hidden = md
    if variant == "wo_att":
        encoder, hidden = 0, D
    head = {"full": hidden, "wo_lambda": 0, "wo_att": hidden, "wo_wd": hidden * mlp + mlp + mlp + 1}[variant]
    return perceptrons + fusion + encoder + head


@pytest.mark.parametrize("variant", ["full", "wo_lambda", "wo_wd", "wo_att"])
def test_parameter_counts(fixture6, variant):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(variant=variant))
    assert m.parameter_count() == expected_count(variant, g.feature_dim, g.num_edge_types)


def test_benchmark_scale_counts():
    # a 16-d feature graph with 4 relations, as in the planted-signal benchmark
    assert expected_count("full", 16, 4) == 168580
    assert expected_count("wo_lambda", 16, 4) == 168452
    assert expected_count("wo_wd", 16, 4) == 176773
    assert expected_count("wo_att", 16, 4) == 117376


def test_wo_lambda_scores_are_plain_sums(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(variant="wo_lambda", **SMALL))
    h = m.hidden().data
    np.testing.assert_allclose(m.predict(), wasserstein_embed_array(h, m.reference).sum(axis=1), rtol=1e-12)


def test_full_scores_are_lambda_products(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    h_star = wasserstein_embed_array(m.hidden().data, m.reference)
    np.testing.assert_allclose(m.predict(), h_star @ m.head["head.lambda"].data, rtol=1e-12)


def test_wo_att_uses_fused_embeddings(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(variant="wo_att"))
    assert m.encoder is None
    np.testing.assert_array_equal(m.hidden().data, m.fused_embeddings().data)


def test_type_without_metapaths_gets_zero_embedding():
    # venue type 2 reaches no symmetric metapath once the paper->venue relation has no mirror
    g = make_graph([0, 0, 1, 2], [(0, 2, 0), (2, 0, 1), (1, 2, 0), (2, 1, 1), (2, 3, 2)],
                   ["A", "P", "V"], ["w", "wb", "pub"], labels=[1.0, 2.0, np.nan, np.nan],
                   features=np.eye(4)[:, :3])
    m = ImportanceModel(g, tiny_bank(g), ModelConfig(**SMALL))
    e = m.fused_embeddings().data
    assert np.all(e[3] == 0) and np.any(e[0] != 0)


def test_prediction_is_deterministic(fixture6):
    g, bank = fixture6
    a = ImportanceModel(g, bank, ModelConfig(**SMALL)).predict()
    b = ImportanceModel(g, bank, ModelConfig(**SMALL)).predict()
    np.testing.assert_array_equal(a, b)
    c = ImportanceModel(g, bank, ModelConfig(init_seed=1, **SMALL)).predict()
    assert not np.array_equal(a, c)


def test_trace_records_everything(fixture6):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(**SMALL))
    t = Trace()
    m.forward(trace=t)
    assert set(t.alpha) == set(range(len(bank.subnets)))
    assert len(t.attention) == m.config.heads * (m.config.layers - 1)  # one row set per head and update


def test_unknown_variant_and_missing_features(fixture6):
    g, bank = fixture6
    with pytest.raises(ValueError, match="variant"):
        ModelConfig(variant="nope")
    bare = make_graph(g.node_types, np.stack([g.edge_src, g.edge_dst, g.edge_types], 1), g.node_type_names,
                      g.edge_type_names, labels=g.labels)
    with pytest.raises(ValueError, match="features"):
        ImportanceModel(bare, bank)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_roundtrip(fixture6, tmp_path):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(variant="wo_wd", reference_seed=3, **SMALL))
    m.save(tmp_path, extra={"note": "x"})
    loaded, manifest = ImportanceModel.load(tmp_path, g, bank, reference_seed=3)
    assert manifest["note"] == "x"
    np.testing.assert_array_equal(loaded.predict(), m.predict())


def test_checkpoint_refusals(fixture6, tmp_path):
    g, bank = fixture6
    ImportanceModel(g, bank, ModelConfig(reference_seed=3, **SMALL)).save(tmp_path)
    with pytest.raises(ValueError, match="reference seed"):
        ImportanceModel.load(tmp_path, g, bank, reference_seed=4)
    other = make_graph(g.node_types, np.stack([g.edge_src, g.edge_dst, g.edge_types], 1)[:-1], g.node_type_names,
                       g.edge_type_names, labels=g.labels, features=g.features)
    with pytest.raises(ValueError, match="different graph"):
        ImportanceModel.load(tmp_path, other, bank)

    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["reference"]["values"][0] += 0.01
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="do not match"):
        ImportanceModel.load(tmp_path, g, bank)
    del manifest["reference"]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="no reference"):
        ImportanceModel.load(tmp_path, g, bank)


def test_checkpoint_layout_mismatch(fixture6, tmp_path):
    g, bank = fixture6
    ImportanceModel(g, bank, ModelConfig(**SMALL)).save(tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["model"]["variant"] = "wo_wd"
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="layout"):
        ImportanceModel.load(tmp_path, g, bank)


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("variant", ["full", "wo_wd", "wo_att", "wo_lambda"])
def test_end_to_end_gradients(fixture6, variant):
    g, bank = fixture6
    m = ImportanceModel(g, bank, ModelConfig(variant=variant, **SMALL))
    nodes = g.labeled_nodes()
    errors = model_gradient_errors(m, nodes, g.labels[nodes])
    for fam, (err, entries) in errors.items():
        assert err < 1e-4, fam
        # entrywise: central differences at h=1e-6 carry ~1e-10 absolute round-off
        for name, i, a, n in entries:
            assert abs(a - n) <= 1e-4 * abs(n) + 1e-8, (name, i)
