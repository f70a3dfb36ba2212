import numpy as np
import pytest
from hypothesis import given, strategies as st

from fpdanet import metrics as M
from fpdanet.errors import InputError


def brute_force_topk(logits, labels, k):
    """Single-loop reference: sort with the same lower-index tie rule."""
    hits = 0
    for row, label in zip(logits, labels):
        order = sorted(range(len(row)), key=lambda c: (-row[c], c))
        if label in order[:k]:
            hits += 1
    return hits / len(labels)


def brute_force_confusion(preds, labels, n):
    conf = [[0] * n for _ in range(n)]
    for t, p in zip(labels, preds):
        conf[t][p] += 1
    return conf


def test_topk_equals_class_count_is_one():
    logits = np.random.default_rng(0).normal(size=(10, 21))
    labels = np.random.default_rng(1).integers(0, 21, 10)
    assert M.topk_accuracy(logits, labels, 21) == 1.0


def test_topk_hand_built_ranks():
    # Truths rank 1st, 3rd, and 7th.
    logits = np.zeros((3, 21))
    logits[0, 4] = 5.0
    logits[1, [1, 2]] = [9.0, 8.0]
    logits[1, 7] = 7.0
    logits[2, :6] = 10.0
    logits[2, 9] = 1.0
    labels = [4, 7, 9]
    assert M.topk_accuracy(logits, labels, 1) == pytest.approx(1 / 3)
    assert M.topk_accuracy(logits, labels, 5) == pytest.approx(2 / 3)


def test_topk_tie_break_lower_index_wins():
    logits = np.zeros((2, 21))
    assert M.topk_accuracy(logits, [0], 1) == 1.0
    assert M.topk_accuracy(logits[:1], [20], 20) == 0.0


def test_topk_rejects_bad_inputs():
    logits = np.zeros((2, 21))
    with pytest.raises(InputError):
        M.topk_accuracy(logits, [0, 1], 0)
    with pytest.raises(InputError):
        M.topk_accuracy(logits, [0, 21], 1)


def test_confusion_perfect_predictions():
    labels = list(range(21)) * 2
    conf, recall = M.confusion_and_recall(labels, labels)
    assert np.array_equal(conf, 2 * np.eye(21, dtype=int))
    assert np.allclose(recall, 1.0)


def test_recall_partial():
    labels = [3, 3, 3]
    preds = [3, 3, 5]
    conf, recall = M.confusion_and_recall(preds, labels)
    assert recall[3] == pytest.approx(2 / 3)
    assert conf[3][5] == 1


def test_absent_class_recall_convention():
    _, recall = M.confusion_and_recall([0], [0])
    assert recall[1] == 1.0


def test_fnr_values():
    per, mean = M.fnr([1.0, 0.5, 0.75])
    assert np.allclose(per, [0.0, 0.5, 0.25])
    assert mean == pytest.approx(0.25)


def test_fnr_rejects_out_of_range():
    with pytest.raises(InputError):
        M.fnr([1.5])


@given(seed=st.integers(0, 10_000))
def test_metrics_match_brute_force_reference(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 100))
    logits = rng.normal(size=(n, 21))
    labels = rng.integers(0, 21, n)
    for k in (1, 3, 5):
        assert M.topk_accuracy(logits, labels, k) == \
            brute_force_topk(logits, labels, k)
    preds = M.rank_classes(logits)[:, 0]
    conf, _ = M.confusion_and_recall(preds, labels)
    assert conf.tolist() == brute_force_confusion(preds, labels, 21)
    report = M.compute_report(logits, labels)
    assert report.top5 >= report.top1
    for r, f in zip(report.per_class_recall, report.per_class_fnr):
        assert f == 1.0 - r
    assert np.array_equal(np.asarray(report.confusion).sum(axis=1),
                          np.bincount(labels, minlength=21))


@given(seed=st.integers(0, 5000), k1=st.integers(1, 21), k2=st.integers(1, 21))
def test_topk_monotone_in_k(seed, k1, k2):
    if k1 > k2:
        k1, k2 = k2, k1
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(20, 21))
    labels = rng.integers(0, 21, 20)
    assert M.topk_accuracy(logits, labels, k1) <= \
        M.topk_accuracy(logits, labels, k2)


@pytest.fixture
def report():
    rng = np.random.default_rng(2)
    return M.compute_report(rng.normal(size=(80, 21)), rng.integers(0, 21, 80))


def test_csv_round_trip(report):
    text = M.report_to_csv(report)
    rows, summary = M.parse_report_csv(text)
    assert len(rows) == 21
    for c, row in enumerate(rows):
        assert abs(row[1] - report.per_class_recall[c]) < 1e-9
        assert abs(row[3] - report.per_class_fnr[c]) < 1e-9
    assert abs(summary[1] - report.top1) < 1e-9
    assert abs(summary[2] - report.top5) < 1e-9


def test_text_report_contains_summary(report):
    text = M.report_to_text(report)
    assert "top1=" in text and "top5=" in text
    assert text.count("\n") == 23


def test_svg_has_one_bar_per_class(report):
    svg = M.report_to_svg(report)
    assert svg.count("<rect") == 21


def test_emit_report_writes_file(tmp_path, report):
    out = tmp_path / "r.csv"
    M.emit_report(report, "csv", out)
    assert out.read_text() == M.report_to_csv(report)
    with pytest.raises(InputError):
        M.emit_report(report, "pdf")


def test_report_dict_round_trip(report):
    again = M.EvalReport.from_dict(report.to_dict())
    assert again == report
