"""Contemporary loss, classification/regression metrics and forgetting check.

Precision and recall with a zero denominator are reported as 0. Aggregates
are normalised: the class average (C) is the unweighted mean over the
included classes, the weighted average (W) weights each class by its share
of the true-label support.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import learners
from .errors import InputError
from .protocol import PredictionLog, SealedLabels

METRICS = ("precision", "recall", "f1")
LOSSES = ("zero_one", "absolute")


def _aligned(log: PredictionLog, truth: SealedLabels) -> np.ndarray:
    if len(log) != len(truth):
        raise InputError(f"log has {len(log)} records, truth has {len(truth)}")
    if len(log) and (np.any(log.t != truth.t)
                     or np.any(log.sequence_id.astype(str) != str(truth.sequence_id))):
        raise InputError("log and truth are not aligned on (sequence_id, t)")
    return truth.y


def contemporary_losses(log: PredictionLog, truth: SealedLabels, loss: str = "zero_one"):
    """Per-timestep loss of the model current at that timestep."""
    y = _aligned(log, truth)
    if loss == "zero_one":
        return (log.prediction != y).astype(float)
    if loss == "absolute":
        return np.abs(log.prediction.astype(float) - y.astype(float))
    raise InputError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def contemporary_loss(log: PredictionLog, truth: SealedLabels, loss: str = "zero_one",
                      reduce: str = "mean") -> float:
    """Average (``reduce='mean'``) or summed loss over the stream."""
    per_t = contemporary_losses(log, truth, loss)
    if reduce == "sum":
        return float(per_t.sum())
    if reduce != "mean":
        raise InputError("reduce must be 'mean' or 'sum'")
    if per_t.size == 0:
        raise InputError("empty log")
    if loss == "zero_one":
        # written as 1 - hit rate so that loss + accuracy == 1 holds bit for bit
        return 1.0 - (per_t.size - np.count_nonzero(per_t)) / per_t.size
    return float(per_t.mean())


def accuracy(log: PredictionLog, truth: SealedLabels) -> float:
    y = _aligned(log, truth)
    if len(y) == 0:
        raise InputError("accuracy of an empty log is undefined")
    return np.count_nonzero(log.prediction == y) / len(y)


def confusion_counts(y_true, y_pred, C: int) -> np.ndarray:
    """``C x C`` counts, rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise InputError("true and predicted labels differ in length")
    return np.bincount(y_true * C + y_pred, minlength=C * C).reshape(C, C)


@dataclass
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray

    def metric(self, name: str) -> np.ndarray:
        if name not in METRICS:
            raise InputError(f"unknown metric {name!r}")
        return getattr(self, name)


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def prf_per_class(counts) -> ClassMetrics:
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or np.any(counts < 0):
        raise InputError("confusion counts must be a nonnegative square matrix")
    tp = np.diag(counts).astype(float)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)
    p = _safe_div(tp, predicted)
    r = _safe_div(tp, support)
    f1 = _safe_div(2 * p * r, p + r)
    return ClassMetrics(p, r, f1, support.astype(int))


def aggregate(cm: ClassMetrics, metric: str = "f1", mode: str = "macro",
              class_filter: str = "all") -> float:
    values = cm.metric(metric)
    support = cm.support.astype(float)
    if class_filter == "present_only":
        keep = support > 0
    elif class_filter == "all":
        keep = np.ones(len(values), dtype=bool)
    else:
        raise InputError("class_filter must be 'all' or 'present_only'")
    if not keep.any():
        raise InputError("no classes left to aggregate")
    values, support = values[keep], support[keep]
    if mode == "macro":
        return float(values.mean())
    if mode == "weighted":
        total = support.sum()
        if total == 0:
            raise InputError("weighted average needs nonzero support")
        return float(np.dot(support / total, values))
    raise InputError("mode must be 'macro' or 'weighted'")


def mae(predicted, true) -> float:
    predicted = np.asarray(predicted, dtype=float)
    true = np.asarray(true, dtype=float)
    if predicted.shape != true.shape:
        raise InputError("predicted and true values differ in length")
    if predicted.size == 0:
        raise InputError("MAE of an empty vector is undefined")
    return float(np.mean(np.abs(predicted - true)))


@dataclass
class Report:
    """Metrics for one fold of one or more sequences.

    Classification reports carry accuracy and C/W precision, recall, F1 plus
    the confusion counts they came from; regression reports carry MAE.
    """

    fold: str
    n: int
    kind: str
    accuracy: Optional[float] = None
    precision_macro: Optional[float] = None
    precision_weighted: Optional[float] = None
    recall_macro: Optional[float] = None
    recall_weighted: Optional[float] = None
    f1_macro: Optional[float] = None
    f1_weighted: Optional[float] = None
    mae: Optional[float] = None
    confusion: Optional[list] = None
    abs_error_sum: Optional[float] = None

    def get(self, selector: str) -> float:
        value = getattr(self, selector, None)
        if value is None:
            raise InputError(f"report has no metric {selector!r}")
        return value

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "Report":
        return cls(**doc)


def classification_report(counts, fold: str, class_filter: str = "all") -> Report:
    counts = np.asarray(counts)
    n = int(counts.sum())
    if n == 0:
        raise InputError("no scored samples")
    cm = prf_per_class(counts)
    vals = {f"{m}_{mode}": aggregate(cm, m, mode, class_filter)
            for m in METRICS for mode in ("macro", "weighted")}
    return Report(fold, n, "classification", accuracy=np.trace(counts) / n,
                  confusion=counts.tolist(), **vals)


def regression_report(predicted, true, fold: str) -> Report:
    err = np.abs(np.asarray(predicted, dtype=float) - np.asarray(true, dtype=float))
    return Report(fold, int(err.size), "regression", mae=mae(predicted, true),
                  abs_error_sum=float(err.sum()))


def fold_reports(log: PredictionLog, truth: SealedLabels, kind: str,
                 C: Optional[int] = None, class_filter: str = "all") -> dict:
    """Per-fold ``Report`` for every fold present in ``truth``."""
    y = _aligned(log, truth)
    out = {}
    for fold in dict.fromkeys(truth.fold.tolist()):
        m = truth.fold == fold
        if kind == "classification":
            out[fold] = classification_report(
                confusion_counts(y[m], log.prediction[m], C), fold, class_filter)
        else:
            out[fold] = regression_report(log.prediction[m], y[m], fold)
    return out


@dataclass
class DeltaReport:
    metric: str
    updated: float
    baseline: float
    delta: float


def incremental_delta(updated: Report, frozen: Report, metric: str = "accuracy") -> DeltaReport:
    """Signed ``updated - frozen`` difference on the same fold."""
    if updated.fold != frozen.fold or updated.n != frozen.n:
        raise InputError("reports were computed on different folds")
    u, b = updated.get(metric), frozen.get(metric)
    return DeltaReport(metric, u, b, u - b)


@dataclass
class ForgettingResult:
    violations: np.ndarray
    loss_new: np.ndarray
    loss_prev: np.ndarray

    @property
    def rate(self) -> float:
        return float(self.violations.mean()) if self.violations.size else 0.0


def forgetting_diagnostic(state_t, state_prev, x, y) -> ForgettingResult:
    """Flag past examples whose loss under ``state_t`` exceeds ``state_prev``'s.

    A zero violation rate means the updated model respects
    ``l(f(x|theta_t), y) <= l(f(x|theta_{t-1}), y)`` on every past example.
    """
    if (state_t.kind != state_prev.kind
            or state_t.weights.shape != state_prev.weights.shape):
        raise InputError("states differ in kind or shape")
    new = learners.per_sample_loss(state_t, x, y)
    prev = learners.per_sample_loss(state_prev, x, y)
    return ForgettingResult(new > prev, new, prev)


@dataclass
class BatteryReport:
    """Micro-pooled and macro-over-sequences summaries of one fold."""

    pooled: Report
    sequence_mean: dict = field(default_factory=dict)
    n_sequences: int = 0


_SCALARS = ("accuracy", "precision_macro", "precision_weighted", "recall_macro",
            "recall_weighted", "f1_macro", "f1_weighted", "mae")


def battery_report(reports, class_filter: str = "all") -> BatteryReport:
    reports = list(reports)
    if not reports:
        raise InputError("battery_report needs at least one report")
    folds = {r.fold for r in reports}
    kinds = {r.kind for r in reports}
    if len(folds) != 1 or len(kinds) != 1:
        raise InputError("reports must share fold and kind")
    fold, kind = folds.pop(), kinds.pop()
    if kind == "classification":
        counts = sum(np.asarray(r.confusion) for r in reports)
        pooled = classification_report(counts, fold, class_filter)
    else:
        n = sum(r.n for r in reports)
        total = sum(r.abs_error_sum for r in reports)
        pooled = Report(fold, n, kind, mae=total / n, abs_error_sum=total)
    means = {}
    for key in _SCALARS:
        vals = [getattr(r, key) for r in reports]
        if all(v is not None for v in vals):
            means[key] = float(np.mean(vals))
    return BatteryReport(pooled, means, len(reports))
