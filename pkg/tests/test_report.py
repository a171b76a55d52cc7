"""Report rendering: byte-deterministic text/JSON/TSV artifacts plus figures."""

import json

import pytest

import morphseg.report as R
from morphseg.data import SegExample, corpus_stats
from morphseg.evaluation import evaluate
from morphseg.training import ReplicateResult, RunHistory


@pytest.fixture
def small_report():
    preds = ["a|b", "ab|a", "ba"]
    refs = ["a|b", "a|ba", "b|a"]
    return evaluate(preds, refs)


@pytest.fixture
def small_history(small_report):
    reps = (
        ReplicateResult(
            seed=1, eval_points=((5, 0.4), (10, 0.6)), selected_epoch=10,
            selected_dev_accuracy=0.6, test_reports={"": small_report},
        ),
        ReplicateResult(
            seed=2, eval_points=((5, 0.5), (10, 0.5)), selected_epoch=5,
            selected_dev_accuracy=0.5, test_reports={"": small_report},
        ),
    )
    return RunHistory(reps)


def test_eval_text_has_all_metric_keys(small_report):
    text = R.format_eval_text(small_report)
    for key in ("accuracy", "precision", "recall", "f1", "n_examples", "n_correct"):
        assert f"{key} = " in text
    assert "accuracy = 0.3333" in text  # 1 of 3 exact matches


def test_eval_report_files_and_determinism(tmp_path, small_report):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    files1 = R.write_eval_report(out1, small_report)
    files2 = R.write_eval_report(out2, small_report)
    assert files1 == files2
    assert set(files1) == {
        "eval.txt", "eval.json", "eval_predictions.tsv", "eval_metrics.png"
    }
    for name in files1:
        a, b = (out1 / name).read_bytes(), (out2 / name).read_bytes()
        assert len(a) > 0
        if not name.endswith(".png"):  # figures are not part of the byte contract
            assert a == b
    payload = json.loads((out1 / "eval.json").read_text())
    assert payload["n_examples"] == 3
    assert 0.0 <= payload["f1"] <= 1.0
    tsv = (out1 / "eval_predictions.tsv").read_text().splitlines()
    assert tsv[0] == "source\treference\tprediction\tcorrect"
    assert tsv[1] == "ab\ta|b\ta|b\t1"
    assert len(tsv) == 4


def test_stats_report(tmp_path):
    exs = [
        SegExample("ab", "a|b"),
        SegExample("aab", "a|ab"),
        SegExample("b", "b"),
    ]
    stats = corpus_stats(exs, top_k=3)
    text = R.format_stats_text(stats)
    assert "words = 3" in text
    assert "top_morphs:" in text
    assert "   1  a " in text  # rank column then morph column
    files = R.write_stats_report(tmp_path / "s", stats)
    assert set(files) == {"stats.txt", "stats.json", "stats_top_morphs.png"}
    payload = json.loads((tmp_path / "s" / "stats.json").read_text())
    assert payload["n_words"] == 3
    assert payload["top_morphs"][0] == ["a", 2]
    again = R.write_stats_report(tmp_path / "s2", stats)
    assert (tmp_path / "s" / "stats.json").read_bytes() == (
        tmp_path / "s2" / "stats.json"
    ).read_bytes()


def test_history_report(tmp_path, small_history):
    files = R.write_history_report(tmp_path, small_history)
    assert set(files) == {
        "history.txt", "history.json", "history.tsv", "history_curves.png"
    }
    text = (tmp_path / "history.txt").read_text()
    assert "replicates = 2" in text
    assert "seed 1: selected epoch 10, dev accuracy 0.6000" in text
    assert "dev_accuracy_mean = 0.5500" in text
    payload = json.loads((tmp_path / "history.json").read_text())
    assert len(payload["replicates"]) == 2
    assert payload["replicates"][0]["eval_points"] == [[5, 0.4], [10, 0.6]]
    assert "test_summary" in payload
    assert payload["test_summary"][""]["accuracy"]["mean"] == pytest.approx(1 / 3)
    tsv = (tmp_path / "history.tsv").read_text().splitlines()
    assert tsv[0] == "seed\tepoch\tdev_accuracy\tselected"
    assert len(tsv) == 1 + 4  # two replicates x two eval points
    assert tsv[2] == "1\t10\t0.6\t1"


def test_manifest_sorted_and_timestamp_free(tmp_path):
    R.write_manifest(tmp_path, "stats", {"data": "x.tsv", "top-k": 5}, ["b.txt", "a.json"])
    payload = json.loads((tmp_path / "manifest.json").read_text())
    assert payload["command"] == "stats"
    assert payload["files"] == ["a.json", "b.txt", "manifest.json"]
    assert payload["config"] == {"data": "x.tsv", "top-k": 5}
    assert "time" not in (tmp_path / "manifest.json").read_text().lower()
