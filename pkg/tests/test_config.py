import pytest

from hinimp.config import ConfigError, RunConfig, help_text, load_config, parse_pairs, read_pairs


def test_defaults_are_valid():
    cfg = RunConfig()
    assert cfg.synthetic == "bibliographic" and cfg.folds == [0, 1, 2, 3, 4]
    assert cfg.graph_seed == cfg.seed == cfg.ref_seed == 0


def test_coercion(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n\nepochs = 7\nlr=0.01\nlog_wallclock = yes\nfolds = 1, 3\n"
                    "metapaths = author[writes]paper[written_by]author\nvariant = wo_wd\n"
                    "synthetic_seed = 5\n")
    cfg = load_config(path, {"seed": "2"})
    assert cfg.epochs == 7 and cfg.lr == 0.01 and cfg.log_wallclock is True
    assert cfg.folds == [1, 3] and cfg.variant == "wo_wd"
    assert cfg.metapaths == ["author[writes]paper[written_by]author"]
    assert cfg.seed == 2 and cfg.graph_seed == 5 and cfg.ref_seed == 2


def test_round_trip_through_text(tmp_path):
    cfg = parse_pairs({"epochs": "3", "ablate_fractions": "0, 0.5", "out": "x"})
    path = tmp_path / "c.cfg"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


@pytest.mark.parametrize("pairs, match", [
    ({"epochz": "3"}, "unknown config key"),
    ({"epochs": "three"}, "cannot parse"),
    ({"log_wallclock": "maybe"}, "cannot parse"),
    ({"variant": "big"}, "variant"),
    ({"knowledge_disable_fraction": "1.5"}, r"\[0, 1\]"),
    ({"eval_split": "dev"}, "eval_split"),
    ({"folds": "0, 5"}, "fold"),
    ({"synthetic": "music"}, "generator"),
    ({"nodes_file": "n.tsv"}, "go together"),
    ({"nodes_file": "n.tsv", "edges_file": "e.tsv", "synthetic": "bibliographic"}, "exactly one"),
])
def test_rejections(pairs, match):
    with pytest.raises(ConfigError, match=match):
        parse_pairs(pairs)


def test_files_switch_off_synthetic():
    cfg = parse_pairs({"nodes_file": "n.tsv", "edges_file": "e.tsv"})
    assert cfg.synthetic == "" and cfg.nodes_file == "n.tsv"


def test_malformed_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("epochs 3\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        read_pairs(path)


def test_help_lists_every_key():
    text = help_text()
    for name in RunConfig.__dataclass_fields__:
        assert f"  {name} = " in text
