import csv
import json

import pytest

from hinimp.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

TINY = """\
synthetic_authors = 30
synthetic_papers = 60
synthetic_venues = 6
feature_dim = 4
walks_per_node = 1
walk_length = 6
window = 2
walk_epochs = 1
heads = 1
head_dim = 8
attention_hidden = 8
epochs = 4
folds = 0, 1
ablate_fractions = 0, 0.5
"""


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.cfg").write_text(TINY + f"out = {root / 'run'}\n")
    return root


def cli(run_dir, *args):
    return main([args[0], "--config", str(run_dir / "tiny.cfg"), *args[1:]])


@pytest.fixture(scope="module")
def trained(run_dir):
    assert cli(run_dir, "preprocess") == EXIT_OK
    assert cli(run_dir, "train") == EXIT_OK
    return run_dir / "run"


def test_train_requires_cache(run_dir, tmp_path):
    assert cli(run_dir, "train", "--out", str(tmp_path)) == EXIT_DATA


def test_preprocess_reports_cache(run_dir, tmp_path, capsys):
    assert cli(run_dir, "preprocess", "--out", str(tmp_path)) == EXIT_OK
    assert "built" in capsys.readouterr().out
    assert cli(run_dir, "preprocess", "--out", str(tmp_path)) == EXIT_OK
    assert "cache hit" in capsys.readouterr().out


def test_train_outputs_are_byte_identical(run_dir, trained, capsys):
    for name in ("metrics.csv", "results.csv", "summary.json", "timing.json", "fold0/checkpoint/params.npz"):
        assert (trained / name).exists()
    first = {n: (trained / n).read_bytes() for n in ("metrics.csv", "results.csv")}
    capsys.readouterr()
    assert cli(run_dir, "train") == EXIT_OK
    assert capsys.readouterr().out.startswith("test mae=")
    for n, data in first.items():
        assert (trained / n).read_bytes() == data


def test_evaluate(run_dir, trained, capsys):
    capsys.readouterr()
    assert cli(run_dir, "evaluate", "--set", "fold=1") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["meta"] == {"fold": 1, "split": "test"}
    assert json.loads((trained / "eval_fold1_test.json").read_text()) == report


def test_predict(run_dir, trained, capsys):
    assert cli(run_dir, "predict") == EXIT_OK
    rows = list(csv.DictReader((trained / "predictions.csv").open()))
    assert len(rows) == 30 and {r["type"] for r in rows} == {"author"}  # only authors carry labels
    assert cli(run_dir, "predict") == EXIT_OK
    assert list(csv.DictReader((trained / "predictions.csv").open())) == rows
    ident = rows[0]["node_id"]
    assert cli(run_dir, "predict", "--set", f"predict_nodes={ident}") == EXIT_OK
    assert list(csv.DictReader((trained / "predictions.csv").open())) == rows[:1]


def test_predict_refusals(run_dir, trained, capsys, tmp_path):
    assert cli(run_dir, "generate", "--out", str(tmp_path)) == EXIT_OK
    capsys.readouterr()
    paper = next(line.split("\t")[0] for line in (tmp_path / "nodes.tsv").read_text().splitlines()
                 if "\tpaper" in line)
    assert cli(run_dir, "predict", "--set", f"predict_nodes={paper}") == EXIT_DATA
    assert "labeled node types" in capsys.readouterr().err
    assert cli(run_dir, "predict", "--set", "predict_nodes=nobody") == EXIT_DATA


def test_generate_writes_tsv(run_dir, tmp_path, capsys):
    assert cli(run_dir, "generate", "--out", str(tmp_path)) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    nodes = (tmp_path / "nodes.tsv").read_text().splitlines()
    assert sum(1 for l in nodes if l and not l.startswith("#")) == 96
    assert summary


def test_ablate(run_dir, trained, capsys):
    assert cli(run_dir, "ablate") == EXIT_OK
    out = run_dir / "run"
    rows = list(csv.DictReader((out / "ablation.csv").open()))
    assert [r["fraction"] for r in rows] == ["0", "0.5"]
    assert (out / "ablation.svg").read_text().startswith("<svg")


def test_usage_errors(run_dir, capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == EXIT_USAGE
    assert cli(run_dir, "train", "--set", "epochz=3") == EXIT_USAGE
    assert cli(run_dir, "train", "--set", "novalue") == EXIT_USAGE
    assert main(["train", "--config", str(run_dir / "missing.cfg")]) == EXIT_DATA


def test_missing_checkpoint(run_dir, tmp_path):
    assert cli(run_dir, "preprocess", "--out", str(tmp_path)) == EXIT_OK
    assert cli(run_dir, "evaluate", "--out", str(tmp_path)) == EXIT_DATA
