"""Training metrics: epoch histories, confusion matrices, reports."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    """Counts[i, j] = samples with true class i predicted as class j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(f"lengths disagree: {predictions.shape} predictions vs {labels.shape} labels")
    for arr, kind in ((predictions, "prediction"), (labels, "label")):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{kind} out of range [0, {num_classes})")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (labels, predictions), 1)
    return m


def accuracy_from_confusion(matrix: np.ndarray) -> float:
    total = int(matrix.sum())
    if total == 0:
        return 0.0
    return float(np.trace(matrix)) / total


@dataclass
class MetricsReport:
    """Per-epoch history plus final test figures for one training run."""

    epochs: list[EpochMetrics] = field(default_factory=list)
    test_accuracy: float | None = None
    confusion: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "epochs": [asdict(e) for e in self.epochs],
            "test_accuracy": self.test_accuracy,
        }
        if self.confusion is not None:
            out["confusion"] = self.confusion.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        report = cls(
            epochs=[EpochMetrics(**e) for e in d.get("epochs", [])],
            test_accuracy=d.get("test_accuracy"),
        )
        if "confusion" in d:
            report.confusion = np.asarray(d["confusion"], dtype=np.int64)
        return report
