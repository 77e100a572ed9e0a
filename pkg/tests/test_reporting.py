import json

import numpy as np

from codelang.metrics import aggregate, confusion, per_class
from codelang.reporting import (
    report_to_json,
    report_to_table,
    save_history_figure,
    save_report,
)


def sample_report():
    matrix = confusion([0, 0, 1, 1, 1, 1], [0, 0, 0, 1, 1, 1], ["C", "C++"])
    return aggregate(per_class(matrix), matrix)


def test_json_has_full_numbers():
    payload = json.loads(report_to_json(sample_report()))
    assert payload["accuracy"] == 5 / 6
    assert payload["labels"] == ["C", "C++"]
    assert payload["confusability"][0] == {
        "actual": "C", "predicted": "C++", "rate": 1 / 3,
    }


def test_table_columns_and_percent_line():
    table = report_to_table(sample_report())
    assert "Precision  Recall  F1      Support" in table
    assert "Accuracy(%)" in table
    assert "83.333" in table  # 5/6 rendered with 3 decimals


def test_save_report_writes_files_and_figures(tmp_path):
    written = save_report(sample_report(), tmp_path, stem="eval")
    names = {p.name for p in written}
    assert names == {"eval.json", "eval.txt", "eval_confusion.png", "eval_per_class.png"}
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_save_report_without_figures(tmp_path):
    written = save_report(sample_report(), tmp_path, stem="eval", figures=False)
    assert {p.name for p in written} == {"eval.json", "eval.txt"}


def test_history_figure(tmp_path):
    path = save_history_figure([1, 2, 3], [2.0, 1.5, 1.2], tmp_path / "loss.png")
    assert path.exists() and path.stat().st_size > 0


def test_report_json_is_deterministic(tmp_path):
    a = report_to_json(sample_report())
    b = report_to_json(sample_report())
    assert a == b
