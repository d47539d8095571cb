"""``hinimp`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, help_text, load_config
from .experiment import (MissingCacheError, apply_disable, fold_plan, load_dataset, prepare, report_for,
                         run_experiment, split_nodes)
from .graph import GraphFormatError, GraphValidationError, save_graph, summarize
from .metrics import METRIC_NAMES, format_value
from .model import ImportanceModel
from .svgchart import line_chart
from .training import TrainingDiverged, predict_labels

logger = logging.getLogger("hinimp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("generate", "preprocess", "train", "evaluate", "predict", "ablate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hinimp", description="Node importance estimation on heterogeneous graphs.",
                epilog=help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single configuration key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    return load_config(args.config, overrides)


# ---------------------------------------------------------------- commands

def cmd_generate(cfg: RunConfig) -> int:
    if not cfg.synthetic:
        raise UsageError("generate needs a synthetic configuration")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from None
    g = load_dataset(cfg)
    save_graph(g, out / "nodes.tsv", out / "edges.tsv", out / "features.tsv")
    print(json.dumps(summarize(g), sort_keys=True))
    return EXIT_OK


def cmd_preprocess(cfg: RunConfig) -> int:
    prep = prepare(cfg)
    state = "cache hit" if prep.cache_hit else "built"
    print(f"knowledge bank {state}: {len(prep.bank.subnets)} sub-networks")
    for s in prep.bank.subnets:
        print(f"  {s.name}\t{s.size} members\t{s.mask.shape[1]} slots")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    prep = prepare(cfg, require_cache=True)
    result = run_experiment(cfg, prepared=prep)
    agg = result.aggregate()
    print("test " + " ".join(f"{k}={format_value(agg[k])}" for k in METRIC_NAMES))
    return EXIT_OK


def _load_checkpoint(cfg: RunConfig):
    prep = prepare(cfg, require_cache=True)
    bank = apply_disable(cfg, prep.bank)
    path = Path(cfg.out) / f"fold{cfg.fold}" / "checkpoint"
    if not (path / "manifest.json").exists():
        raise MissingCacheError(f"no checkpoint at {path}; run `hinimp train` first")
    model, manifest = ImportanceModel.load(path, prep.graph, bank, reference_seed=cfg.ref_seed)
    return prep, model, manifest


def cmd_evaluate(cfg: RunConfig) -> int:
    prep, model, _ = _load_checkpoint(cfg)
    nodes = split_nodes(fold_plan(cfg, prep.graph), cfg.fold, cfg.eval_split)
    report = report_for(model, nodes, cfg, {"fold": cfg.fold, "split": cfg.eval_split})
    text = report.to_json()
    (Path(cfg.out) / f"eval_fold{cfg.fold}_{cfg.eval_split}.json").write_text(text)
    print(text)
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    prep, model, _ = _load_checkpoint(cfg)
    g = prep.graph
    labeled = sorted(g.labeled_types)
    if cfg.predict_nodes:
        index = g.id_index
        missing = [n for n in cfg.predict_nodes if n not in index]
        if missing:
            raise ValueError(f"unknown node ids: {', '.join(missing[:5])}")
        nodes = np.array([index[n] for n in cfg.predict_nodes], dtype=np.int64)
        bad = [cfg.predict_nodes[i] for i, v in enumerate(nodes) if g.node_types[v] not in g.labeled_types]
        if bad:
            names = ", ".join(g.node_type_names[t] for t in labeled)
            raise ValueError(f"cannot score {', '.join(bad[:5])}: importance is only defined for the "
                             f"labeled node types ({names})")
    else:
        nodes = np.flatnonzero(np.isin(g.node_types, labeled))
    scores = predict_labels(model, nodes, cfg.target_transform)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "type", "score"])
    for v, s in zip(nodes, scores):
        w.writerow([g.node_ids[v], g.node_type_names[g.node_types[v]], repr(float(s))])
    (Path(cfg.out) / "predictions.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    prep = prepare(cfg)
    out = Path(cfg.out)
    rows = []
    for frac in cfg.ablate_fractions:
        sub = cfg.replace(knowledge_disable_fraction=float(frac), out=str(out / f"ablate_{frac:g}"))
        agg = run_experiment(sub, prepared=prep).aggregate()
        rows.append({"fraction": frac, **agg})
        logger.info("fraction %g: mae %.4f", frac, agg["mae"])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["fraction", *METRIC_NAMES], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: format_value(v) if k != "fraction" else f"{v:g}" for k, v in r.items()})
    (out / "ablation.csv").write_text(buf.getvalue())
    xs = [r["fraction"] for r in rows]
    svg = line_chart(xs, {"MAE": [r["mae"] for r in rows], "RMSE": [r["rmse"] for r in rows]},
                     title="Knowledge ablation", x_label="disabled fraction", y_label="test error")
    (out / "ablation.svg").write_text(svg)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


HANDLERS = {"generate": cmd_generate, "preprocess": cmd_preprocess, "train": cmd_train,
            "evaluate": cmd_evaluate, "predict": cmd_predict, "ablate": cmd_ablate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return HANDLERS[args.command](cfg)
    except (ConfigError, UsageError) as exc:
        print(f"hinimp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, OverflowError) as exc:
        print(f"hinimp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphFormatError, GraphValidationError, MissingCacheError, FileNotFoundError, ValueError) as exc:
        print(f"hinimp: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
