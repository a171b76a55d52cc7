"""Tests for the segmentation metrics.

The boundary-set and micro-F1 logic is checked against an independent
brute-force implementation (different algorithm: piece splitting with prefix
sums) over a thousand random segmentation pairs, plus hand-frozen worked
examples.
"""

import numpy as np
import pytest

from morphseg import evaluation as E


# ---------------------------------------------------------------------------
# independent oracle


def oracle_positions(seg):
    pieces = seg.split("|")
    total = sum(len(p) for p in pieces)
    pos, acc = set(), 0
    for piece in pieces[:-1]:
        acc += len(piece)
        if 0 < acc < total:
            pos.add(acc)
    return pos


def oracle_f1(preds, golds):
    matched = predicted = reference = 0
    for p, g in zip(preds, golds):
        bp, bg = oracle_positions(p), oracle_positions(g)
        matched += len(bp & bg)
        predicted += len(bp)
        reference += len(bg)
    prec = matched / predicted if predicted else (1.0 if reference == 0 else 0.0)
    rec = matched / reference if reference else (1.0 if predicted == 0 else 0.0)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1, matched, predicted, reference


def random_segmentation(rng, word):
    out = []
    for i, ch in enumerate(word):
        if i > 0 and rng.random() < 0.4:
            out.append("|")
            if rng.random() < 0.1:  # occasional doubled separator
                out.append("|")
        out.append(ch)
    if rng.random() < 0.05:  # occasional edge separators
        out.insert(0, "|")
    if rng.random() < 0.05:
        out.append("|")
    return "".join(out)


# ---------------------------------------------------------------------------
# boundary positions


def test_boundary_positions_worked_examples():
    assert E.boundary_positions("ne|p+|ti|kuye|kai") == {2, 4, 6, 10}
    assert E.boundary_positions("o|ne|mo|kokowa|ya") == {1, 3, 5, 11}


def test_boundary_positions_edges_and_duplicates():
    assert E.boundary_positions("abc") == set()
    assert E.boundary_positions("|ab") == set()
    assert E.boundary_positions("ab|") == set()
    assert E.boundary_positions("a||b") == {1}
    assert E.boundary_positions("||") == set()
    assert E.boundary_positions("") == set()
    assert E.boundary_positions("a") == set()


# ---------------------------------------------------------------------------
# token accuracy


def test_token_accuracy_exact_match():
    preds = ["a|b", "ab", "a|bc"]
    golds = ["a|b", "a|b", "a|bc"]
    assert E.token_accuracy(preds, golds) == pytest.approx(2 / 3)


def test_token_accuracy_input_validation():
    with pytest.raises(E.EvaluationError):
        E.token_accuracy(["a"], ["a", "b"])
    with pytest.raises(E.EvaluationError):
        E.token_accuracy([], [])


# ---------------------------------------------------------------------------
# boundary F1


def test_border_f1_completely_wrong_boundary():
    s = E.border_f1(["a|bcd"], ["ab|cd"])
    assert s.precision == 0.0 and s.recall == 0.0 and s.f1 == 0.0


def test_border_f1_shifted_characters_do_not_match():
    s = E.border_f1(["axb|cd"], ["ab|cd"])
    assert s.matched == 0 and s.f1 == 0.0


def test_border_f1_both_unsegmented_is_perfect():
    s = E.border_f1(["abcd", "x"], ["abcd", "x"])
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)


def test_border_f1_one_sided_empty():
    # No predicted boundaries but some expected: recall 0 and precision 0.
    s = E.border_f1(["abcd"], ["ab|cd"])
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    # Predicted boundaries where none exist: both 0 as well.
    s = E.border_f1(["ab|cd"], ["abcd"])
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)


def test_border_f1_partial_overlap():
    s = E.border_f1(["nep+|ti|kuyekai"], ["ne|p+|ti|kuye|kai"])
    assert s.matched == 2 and s.predicted == 2 and s.reference == 4
    assert s.precision == pytest.approx(1.0)
    assert s.recall == pytest.approx(0.5)
    assert s.f1 == pytest.approx(2 / 3)


def test_border_f1_swapping_sides_swaps_precision_and_recall():
    rng = np.random.default_rng(13)
    words = ["".join(rng.choice(list("abc"), size=6)) for _ in range(40)]
    preds = [random_segmentation(rng, w) for w in words]
    golds = [random_segmentation(rng, w) for w in words]
    fwd = E.border_f1(preds, golds)
    rev = E.border_f1(golds, preds)
    assert fwd.precision == pytest.approx(rev.recall)
    assert fwd.recall == pytest.approx(rev.precision)
    assert fwd.f1 == pytest.approx(rev.f1)


def test_border_f1_duplicate_separators_collapse():
    assert E.border_f1(["a||b"], ["a|b"]).f1 == 1.0


def test_border_f1_brute_force_oracle_thousand_pairs():
    rng = np.random.default_rng(101)
    preds, golds = [], []
    for _ in range(1000):
        word = "".join(rng.choice(list("abcd"), size=int(rng.integers(1, 9))))
        preds.append(random_segmentation(rng, word))
        golds.append(random_segmentation(rng, word))
        # Per-pair agreement of the boundary sets themselves.
        assert E.boundary_positions(preds[-1]) == oracle_positions(preds[-1])
    s = E.border_f1(preds, golds)
    prec, rec, f1, matched, predicted, reference = oracle_f1(preds, golds)
    assert s.precision == pytest.approx(prec, abs=1e-12)
    assert s.recall == pytest.approx(rec, abs=1e-12)
    assert s.f1 == pytest.approx(f1, abs=1e-12)
    assert (s.matched, s.predicted, s.reference) == (matched, predicted, reference)


# ---------------------------------------------------------------------------
# full report


def test_evaluate_report_consistency():
    preds = ["a|b", "ab", "abc"]
    golds = ["a|b", "a|b", "ab|c"]
    rep = E.evaluate(preds, golds, sources=["ab", "ab", "abc"])
    assert rep.n_examples == 3 and rep.n_correct == 1
    assert rep.accuracy == pytest.approx(1 / 3)
    assert rep.matched_boundaries == 1
    assert rep.predicted_boundaries == 1
    assert rep.reference_boundaries == 3
    assert rep.precision == pytest.approx(1.0)
    assert rep.recall == pytest.approx(1 / 3)
    assert [r.correct for r in rep.examples] == [True, False, False]
    # Sources default to the references with separators stripped.
    rep2 = E.evaluate(preds, golds)
    assert [r.source for r in rep2.examples] == ["ab", "ab", "abc"]
    with pytest.raises(E.EvaluationError):
        E.evaluate(preds, golds, sources=["ab"])
