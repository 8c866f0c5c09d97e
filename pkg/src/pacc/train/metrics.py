"""Regression metrics and fold summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ConstantTruth(UserWarning):
    pass


@dataclass(frozen=True)
class MetricReport:
    rmse: float  # normalized label scale
    rmse_log: float  # log-IC50 scale
    pearson: float
    r2: float
    count: int

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)

    def as_dict(self) -> dict[str, float | int]:
        return {"rmse": self.rmse, "rmse_log": self.rmse_log, "pearson": self.pearson, "r2": self.r2,
                "count": self.count}


def rmse(pred, truth) -> float:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def pearson(pred, truth) -> float:
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    return float(dx @ dy) / denom if denom > 0 else math.nan


def r2(pred, truth) -> float:
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        return math.nan
    return 1.0 - float(((y - x) ** 2).sum()) / ss_tot


def metrics(pred, truth, label_transform=None) -> MetricReport:
    """Metrics for log-scale ``pred``/``truth``.

    ``rmse`` is taken on the normalized scale when a label transform is given
    (otherwise it equals ``rmse_log``). Constant truth leaves r2 as NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"pred {pred.shape} and truth {truth.shape} must be equal-length vectors")
    if len(pred) < 2:
        raise ValueError("metrics need at least two pairs")
    norm = rmse(label_transform.apply(pred), label_transform.apply(truth)) if label_transform else rmse(pred, truth)
    return MetricReport(norm, rmse(pred, truth), pearson(pred, truth), r2(pred, truth), len(pred))


def median_iqr(values) -> tuple[float, float]:
    """Median and Q3 - Q1 with linear-interpolation quantiles."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return float(med), float(q3 - q1)
