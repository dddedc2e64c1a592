"""Rendered reports: metric files (JSON + CSV) and matplotlib figures.

Every writer is deterministic: fixed figure geometry, no timestamps, and
pinned PNG metadata, so repeated runs produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EpochMetrics, MetricsReport  # noqa: E402

_PNG_METADATA = {"Software": "wastenet"}


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def write_metrics_json(report: MetricsReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def read_metrics_json(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))


def write_history_csv(history: list[EpochMetrics], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
        for e in history:
            writer.writerow([e.epoch, f"{e.train_loss:.6f}", f"{e.train_accuracy:.6f}",
                             f"{e.val_loss:.6f}", f"{e.val_accuracy:.6f}"])


def plot_training_curves(history: list[EpochMetrics], path) -> None:
    epochs = [e.epoch for e in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_loss.plot(epochs, [e.train_loss for e in history], marker="o", label="train")
    ax_loss.plot(epochs, [e.val_loss for e in history], marker="s", label="val")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_acc.plot(epochs, [e.train_accuracy for e in history], marker="o", label="train")
    ax_acc.plot(epochs, [e.val_accuracy for e in history], marker="s", label="val")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_confusion_matrix(matrix: np.ndarray, path, class_names=None) -> None:
    k = matrix.shape[0]
    fig, ax = plt.subplots(figsize=(0.45 * k + 2.2, 0.45 * k + 2.0))
    im = ax.imshow(matrix, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ticks = class_names if class_names is not None else [str(i) for i in range(k)]
    ax.set_xticks(range(k), ticks, rotation=90 if k > 10 else 0)
    ax.set_yticks(range(k), ticks)
    if k <= 12:
        threshold = matrix.max() / 2 if matrix.max() else 1
        for i in range(k):
            for j in range(k):
                ax.text(j, i, str(matrix[i, j]), ha="center", va="center",
                        color="white" if matrix[i, j] > threshold else "black", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _chw_to_rgb(image: np.ndarray) -> np.ndarray:
    return np.clip(image.transpose(1, 2, 0), 0.0, 1.0)


def plot_mask_examples(images, true_masks, pred_masks, path, limit: int = 4) -> None:
    """Rows of (image, reference mask, predicted mask)."""
    n = min(limit, len(images))
    fig, axes = plt.subplots(n, 3, figsize=(7.2, 2.4 * n), squeeze=False)
    for r in range(n):
        axes[r][0].imshow(_chw_to_rgb(images[r]))
        axes[r][1].imshow(true_masks[r][0], cmap="gray", vmin=0, vmax=1)
        axes[r][2].imshow(pred_masks[r][0], cmap="gray", vmin=0, vmax=1)
        for c, title in enumerate(("image", "mask", "predicted")):
            if r == 0:
                axes[r][c].set_title(title)
            axes[r][c].axis("off")
    fig.tight_layout()
    _save(fig, path)


def plot_pair_examples(pairs, path, limit: int = 4, labels=None) -> None:
    """Rows of (before, after) crops; `pairs` yields (before, after) arrays."""
    n = min(limit, len(pairs))
    fig, axes = plt.subplots(n, 2, figsize=(5.2, 2.5 * n), squeeze=False)
    for r in range(n):
        before, after = pairs[r][0], pairs[r][1]
        axes[r][0].imshow(_chw_to_rgb(before))
        axes[r][1].imshow(_chw_to_rgb(after))
        if r == 0:
            axes[r][0].set_title("before")
            axes[r][1].set_title("after")
        if labels is not None:
            axes[r][0].set_ylabel(str(labels[r]), rotation=0, labelpad=18)
        axes[r][0].set_xticks([])
        axes[r][0].set_yticks([])
        axes[r][1].axis("off")
    fig.tight_layout()
    _save(fig, path)
