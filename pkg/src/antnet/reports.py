"""Run artifacts: line-delimited records plus rendered figures.

Every report exists twice — as JSONL/JSON for machines and as a PNG for
eyeballs.  The figure writers are silent about style on purpose; they exist
so a training run leaves something inspectable next to the raw numbers.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import LABEL_NAMES
from .training import EvalReport


def write_jsonl(path, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# figures


def history_figure(history: list, path) -> Path:
    """Loss and accuracy curves over epochs; validation drawn when present."""
    epochs = [row["epoch"] for row in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.4))

    ax_loss.plot(epochs, [row["train_loss"] for row in history], label="train")
    if any(row.get("val_loss") is not None for row in history):
        ax_loss.plot(epochs, [row["val_loss"] for row in history], label="val")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy")
    ax_loss.legend()

    ax_acc.plot(epochs, [row["train_acc"] for row in history], label="train")
    if any(row.get("val_acc") is not None for row in history):
        ax_acc.plot(epochs, [row["val_acc"] for row in history], label="val")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def confusion_figure(report: EvalReport, path) -> Path:
    """Gold-by-predicted count grid with cell annotations."""
    cm = np.asarray(report.confusion)
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(3), LABEL_NAMES)
    ax.set_yticks(range(3), LABEL_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    threshold = cm.max() / 2 if cm.max() else 0.5
    for i in range(3):
        for j in range(3):
            color = "white" if cm[i, j] > threshold else "black"
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color=color)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def sweep_figure(rows: list, path) -> Path:
    """Test metrics against the swept hyperparameter value."""
    if not rows:
        raise ValueError("sweep figure needs at least one row")
    param = rows[0]["param"]
    values = [row["value"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(values, [row["test_accuracy"] for row in rows],
            marker="o", label="accuracy")
    ax.plot(values, [row["test_macro_f1"] for row in rows],
            marker="s", label="macro-F1")
    ax.set_xlabel(param)
    ax.set_ylabel("test metric")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(values)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def ablation_figure(rows: list, path) -> Path:
    """Accuracy and macro-F1 bars, one group per model variant."""
    if not rows:
        raise ValueError("ablation figure needs at least one row")
    names = [row["variant"] for row in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(1.4 * len(names) + 2.4, 3.6))
    ax.bar(x - 0.2, [row["test_accuracy"] for row in rows], width=0.4,
           label="accuracy")
    ax.bar(x + 0.2, [row["test_macro_f1"] for row in rows], width=0.4,
           label="macro-F1")
    ax.set_xticks(x, names, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("test metric")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
