"""Binary detection metrics with attack (label 1) as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int

    @property
    def total(self) -> int:
        return self.true_positive + self.false_positive + self.true_negative + self.false_negative

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "ConfusionCounts":
        y_true = np.asarray(y_true).astype(np.int64)
        y_pred = np.asarray(y_pred).astype(np.int64)
        if y_true.shape != y_pred.shape:
            raise ValueError(f"label arrays differ: {y_true.shape} vs {y_pred.shape}")
        return cls(
            true_positive=int(np.sum((y_true == 1) & (y_pred == 1))),
            false_positive=int(np.sum((y_true == 0) & (y_pred == 1))),
            true_negative=int(np.sum((y_true == 0) & (y_pred == 0))),
            false_negative=int(np.sum((y_true == 1) & (y_pred == 0))),
        )


@dataclass(frozen=True)
class MetricsReport:
    """Detection rates as fractions in [0, 1]; None where the denominator is zero."""

    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    false_positive_rate: float | None
    false_negative_rate: float | None
    counts: ConfusionCounts

    @classmethod
    def from_counts(cls, c: ConfusionCounts) -> "MetricsReport":
        if c.total == 0:
            raise ValueError("cannot compute metrics over zero samples")

        def ratio(num, den):
            return num / den if den else None

        precision = ratio(c.true_positive, c.true_positive + c.false_positive)
        recall = ratio(c.true_positive, c.true_positive + c.false_negative)
        if precision is None or recall is None or precision + recall == 0:
            f1 = None
        else:
            f1 = 2 * precision * recall / (precision + recall)
        return cls(
            accuracy=(c.true_positive + c.true_negative) / c.total,
            precision=precision,
            recall=recall,
            f1=f1,
            false_positive_rate=ratio(c.false_positive, c.false_positive + c.true_negative),
            false_negative_rate=ratio(c.false_negative, c.false_negative + c.true_positive),
            counts=c,
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "false_positive_rate": self.false_positive_rate,
            "false_negative_rate": self.false_negative_rate,
            "counts": {
                "true_positive": self.counts.true_positive,
                "false_positive": self.counts.false_positive,
                "true_negative": self.counts.true_negative,
                "false_negative": self.counts.false_negative,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        counts = ConfusionCounts(**data["counts"])
        return cls(
            accuracy=data["accuracy"],
            precision=data["precision"],
            recall=data["recall"],
            f1=data["f1"],
            false_positive_rate=data["false_positive_rate"],
            false_negative_rate=data["false_negative_rate"],
            counts=counts,
        )


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    return MetricsReport.from_counts(ConfusionCounts.from_predictions(y_true, y_pred))
