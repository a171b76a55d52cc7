"""Segmentation metrics: exact-match accuracy and boundary F1.

A boundary sits between two characters of the unsegmented word and is
identified by the number of characters before it.  Separators at the very
start or end of a string (and doubled separators) mark no real boundary and
are ignored, so every boundary position lies strictly between 0 and the word
length.  Precision/recall are micro-averaged over the whole test set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .data import SEPARATOR


class EvaluationError(ValueError):
    """Prediction/reference lists unusable for scoring."""


def boundary_positions(segmentation: str) -> set[int]:
    """Positions of the morph boundaries a segmentation marks.

    Position k means "after the k-th character of the word"; only interior
    positions count, and repeated separators collapse to one boundary.
    """
    total = sum(1 for ch in segmentation if ch != SEPARATOR)
    positions: set[int] = set()
    seen = 0
    for ch in segmentation:
        if ch == SEPARATOR:
            if 0 < seen < total:
                positions.add(seen)
        else:
            seen += 1
    return positions


def token_accuracy(predictions: Sequence[str], references: Sequence[str]) -> float:
    """Fraction of predictions that match their reference exactly."""
    if len(predictions) != len(references):
        raise EvaluationError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if not references:
        raise EvaluationError("cannot score an empty test set")
    return sum(p == r for p, r in zip(predictions, references)) / len(references)


@dataclass(frozen=True)
class BorderScores:
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    reference: int


def border_f1(predictions: Sequence[str], references: Sequence[str]) -> BorderScores:
    """Micro-averaged boundary precision/recall/F1.

    With no predicted boundaries at all, precision is 1.0 exactly when there
    are also no reference boundaries (and 0.0 otherwise); recall mirrors
    that.  Two entirely unsegmented sides therefore score a perfect 1.0.
    """
    if len(predictions) != len(references):
        raise EvaluationError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if not references:
        raise EvaluationError("cannot score an empty test set")
    matched = predicted = reference = 0
    for p, r in zip(predictions, references):
        bp = boundary_positions(p)
        br = boundary_positions(r)
        matched += len(bp & br)
        predicted += len(bp)
        reference += len(br)
    if predicted:
        precision = matched / predicted
    else:
        precision = 1.0 if reference == 0 else 0.0
    if reference:
        recall = matched / reference
    else:
        recall = 1.0 if predicted == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BorderScores(precision, recall, f1, matched, predicted, reference)


@dataclass(frozen=True)
class ExampleRecord:
    source: str
    reference: str
    prediction: str
    correct: bool


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_examples: int
    n_correct: int
    matched_boundaries: int
    predicted_boundaries: int
    reference_boundaries: int
    examples: tuple[ExampleRecord, ...]


def evaluate(
    predictions: Sequence[str],
    references: Sequence[str],
    sources: Sequence[str] | None = None,
) -> EvalReport:
    """Score a test set and keep the per-example outcomes for reporting."""
    accuracy = token_accuracy(predictions, references)
    borders = border_f1(predictions, references)
    if sources is None:
        sources = [r.replace(SEPARATOR, "") for r in references]
    elif len(sources) != len(references):
        raise EvaluationError(
            f"{len(sources)} sources vs {len(references)} references"
        )
    records = tuple(
        ExampleRecord(s, r, p, p == r)
        for s, r, p in zip(sources, references, predictions)
    )
    return EvalReport(
        accuracy=accuracy,
        precision=borders.precision,
        recall=borders.recall,
        f1=borders.f1,
        n_examples=len(records),
        n_correct=sum(rec.correct for rec in records),
        matched_boundaries=borders.matched,
        predicted_boundaries=borders.predicted,
        reference_boundaries=borders.reference,
        examples=records,
    )
