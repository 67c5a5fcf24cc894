"""JSONL round-trips and figure rendering."""

import numpy as np
import pytest

from antnet.reports import (
    ablation_figure, confusion_figure, history_figure, read_jsonl,
    sweep_figure, write_json, write_jsonl,
)
from antnet.training import metrics_from_confusion


def fake_history(n=6, with_val=True):
    rows = []
    for e in range(1, n + 1):
        rows.append({
            "epoch": e,
            "train_loss": 1.0 / e,
            "train_acc": 1.0 - 0.5 / e,
            "val_loss": 1.2 / e if with_val else None,
            "val_acc": 1.0 - 0.6 / e if with_val else None,
        })
    return rows


class TestJsonl:
    def test_round_trip(self, tmp_path):
        rows = [{"a": 1, "b": [1.5, None]}, {"a": 2, "b": []}]
        path = write_jsonl(tmp_path / "rows.jsonl", rows)
        assert read_jsonl(path) == rows

    def test_writes_are_byte_stable(self, tmp_path):
        rows = [{"z": 1, "a": 0.25}]
        p1 = write_jsonl(tmp_path / "a.jsonl", rows)
        p2 = write_jsonl(tmp_path / "b.jsonl", rows)
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_text().startswith('{"a": 0.25')  # keys sorted

    def test_empty_file(self, tmp_path):
        path = write_jsonl(tmp_path / "empty.jsonl", [])
        assert read_jsonl(path) == []

    def test_write_json(self, tmp_path):
        path = write_json(tmp_path / "obj.json", {"b": 2, "a": 1})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')


class TestFigures:
    def test_history_figure_written(self, tmp_path):
        path = history_figure(fake_history(), tmp_path / "history.png")
        assert path.exists() and path.stat().st_size > 1000

    def test_history_without_validation(self, tmp_path):
        path = history_figure(fake_history(with_val=False),
                              tmp_path / "history.png")
        assert path.exists()

    def test_confusion_figure_written(self, tmp_path):
        report = metrics_from_confusion(np.array([[5, 1, 0], [2, 3, 1], [0, 0, 4]]))
        path = confusion_figure(report, tmp_path / "confusion.png")
        assert path.exists() and path.stat().st_size > 1000

    def test_sweep_figure_written(self, tmp_path):
        rows = [{"param": "ne", "value": v, "test_accuracy": 0.5 + v / 100,
                 "test_macro_f1": 0.4 + v / 100, "best_epoch": 3}
                for v in (5, 9, 13)]
        path = sweep_figure(rows, tmp_path / "sweep.png")
        assert path.exists() and path.stat().st_size > 1000

    def test_sweep_figure_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            sweep_figure([], tmp_path / "sweep.png")

    def test_ablation_figure_written(self, tmp_path):
        rows = [{"variant": name, "test_accuracy": 0.7, "test_macro_f1": 0.6}
                for name in ("antnet", "antnet-sa", "bilstm-a")]
        path = ablation_figure(rows, tmp_path / "ablation.png")
        assert path.exists() and path.stat().st_size > 1000

    def test_ablation_figure_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            ablation_figure([], tmp_path / "ablation.png")
