"""Regression and ranking metrics for importance estimation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

NORMALIZERS = ("range", "mean", "std")
METRIC_NAMES = ("mae", "rmse", "nrmse", "ndcg", "spearman")


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(y)} labels")
    if len(p) == 0:
        raise ValueError("empty input")
    return p, y


def regression_metrics(preds, labels, normalizer: str = "range") -> tuple[float, float, float]:
    """(MAE, RMSE, NRMSE); NRMSE is NaN when the normalizer is zero."""
    p, y = _pair(preds, labels)
    d = p - y
    mae = float(np.abs(d).mean())
    rmse = float(np.sqrt((d * d).mean()))
    if normalizer == "range":
        scale = float(y.max() - y.min())
    elif normalizer == "mean":
        scale = float(abs(y.mean()))
    elif normalizer == "std":
        scale = float(y.std())
    else:
        raise ValueError(f"unknown NRMSE normalizer {normalizer!r}")
    nrmse = rmse / scale if scale > 0 else math.nan
    return mae, rmse, nrmse


def spearman(preds, labels) -> float:
    """Pearson correlation of average ranks; NaN when either side is constant."""
    p, y = _pair(preds, labels)
    if len(p) < 2:
        raise ValueError("spearman needs at least two points")
    rp = rankdata(p) - (len(p) + 1) / 2.0
    ry = rankdata(y) - (len(y) + 1) / 2.0
    denom = math.sqrt(float((rp * rp).sum()) * float((ry * ry).sum()))
    return float((rp * ry).sum() / denom) if denom > 0 else math.nan


def ndcg(preds, labels, k: int = 100, ids=None) -> float:
    """NDCG@k with linear gains; prediction ties broken by ascending node id.

    Negative labels are shifted so the minimum gain is zero. ``k`` larger than
    the input is clipped. NaN when every gain is zero.
    """
    p, y = _pair(preds, labels)
    ids = np.arange(len(p)) if ids is None else np.asarray(ids)
    k = min(int(k), len(p))
    if k < 1:
        raise ValueError("k must be positive")
    gain = y - y.min() if y.min() < 0 else y
    discount = 1.0 / np.log2(np.arange(2, k + 2))
    top = np.lexsort((ids, -p))[:k]
    dcg = float((gain[top] * discount).sum())
    ideal = float((np.sort(gain)[::-1][:k] * discount).sum())
    return dcg / ideal if ideal > 0 else math.nan


@dataclass
class TypeMetrics:
    count: int
    mae: float
    rmse: float
    nrmse: float
    ndcg: float
    spearman: float


def evaluate_type(preds, labels, ids=None, k: int = 100, normalizer: str = "range") -> TypeMetrics:
    p, y = _pair(preds, labels)
    mae, rmse, nrmse = regression_metrics(p, y, normalizer)
    rho = spearman(p, y) if len(p) >= 2 else math.nan
    return TypeMetrics(len(p), mae, rmse, nrmse, ndcg(p, y, k, ids), rho)


@dataclass
class EvalReport:
    """Per-type metrics plus their micro-average (weighted by node count)."""

    per_type: dict[str, TypeMetrics]
    k: int = 100
    normalizer: str = "range"
    meta: dict = field(default_factory=dict)

    @property
    def micro(self) -> dict[str, float]:
        total = sum(m.count for m in self.per_type.values())
        out = {}
        for name in METRIC_NAMES:
            vals = [(getattr(m, name), m.count) for m in self.per_type.values()]
            vals = [(v, c) for v, c in vals if not math.isnan(v)]
            out[name] = sum(v * c for v, c in vals) / sum(c for _, c in vals) if vals else math.nan
        out["count"] = total
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "nrmse_normalizer": self.normalizer, "meta": self.meta,
                "per_type": {t: asdict(m) for t, m in self.per_type.items()}, "micro": self.micro}

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True)

    def csv_rows(self) -> list[dict]:
        rows = [dict(type=t, **asdict(m)) for t, m in self.per_type.items()]
        rows.append(dict(type="micro", **self.micro))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["type", "count", *METRIC_NAMES], lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow({k: format_value(v) for k, v in row.items()})
        return buf.getvalue()


def evaluate(preds, labels, types, type_names, ids=None, k: int = 100, normalizer: str = "range",
             meta: dict | None = None) -> EvalReport:
    """Split predictions by node type and score each type separately."""
    p, y = _pair(preds, labels)
    types = np.asarray(types)
    ids = np.arange(len(p)) if ids is None else np.asarray(ids)
    per = {}
    for t in np.unique(types):
        sel = types == t
        per[type_names[int(t)]] = evaluate_type(p[sel], y[sel], ids[sel], k, normalizer)
    return EvalReport(per, k, normalizer, dict(meta or {}))


def format_value(v) -> str:
    """Stable text form for CSV output: ints as-is, floats with 10 significant digits, NaN as empty."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or math.isnan(v):
        return ""
    return f"{float(v):.10g}"


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj
