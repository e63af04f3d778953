"""Confusion matrix and derived classification metrics (class 1 positive)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ConfigError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fn_rate: float
    # metrics whose denominator was empty and were reported as 0
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fn_rate": self.fn_rate,
            "degenerate": list(self.degenerate),
        }


def confusion(pred_labels, true_labels) -> ConfusionMatrix:
    pred = np.asarray(pred_labels).astype(np.int64)
    true = np.asarray(true_labels).astype(np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ConfigError(
            f"prediction/truth shape mismatch: {pred.shape} vs {true.shape}")
    for name, arr in (("predictions", pred), ("truths", true)):
        if not np.isin(arr, (0, 1)).all():
            raise ConfigError(f"{name} must be binary 0/1")
    return ConfusionMatrix(
        tn=int(np.sum((pred == 0) & (true == 0))),
        fp=int(np.sum((pred == 1) & (true == 0))),
        fn=int(np.sum((pred == 0) & (true == 1))),
        tp=int(np.sum((pred == 1) & (true == 1))),
    )


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Accuracy, precision, recall, F1 and false-negative rate.

    Undefined ratios (empty denominators) come back as 0 and are named
    in ``degenerate`` so reports stay total.
    """
    if cm.total == 0:
        raise ConfigError("metrics of an empty confusion matrix are undefined")
    degenerate = []

    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision, _ = 0.0, degenerate.append("precision")
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
        fn_rate = cm.fn / (cm.tp + cm.fn)
    else:
        recall, fn_rate = 0.0, 0.0
        degenerate.extend(["recall", "fn_rate"])
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, _ = 0.0, degenerate.append("f1")

    return MetricReport(accuracy=accuracy, precision=precision, recall=recall,
                        f1=f1, fn_rate=fn_rate, degenerate=tuple(degenerate))
