"""Ranking metrics over (score, truth) pairs: PR and ROC curves, average precision and ROC-AUC.

Samples are sorted by descending score with a stable sort, and every distinct score is one threshold, so tied
samples always enter the positive set together.
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from attrnet.consts import LabelScheme
from attrnet.errors import DimensionError, ParameterError, UndefinedMetricError


def binarize_eval_labels(raw: Sequence[int] | np.ndarray, scheme: LabelScheme = LabelScheme.ternary) -> np.ndarray:
    """Map raw labels to evaluation truths: ambiguous (0) and +1 count as positive, -1 as negative.

    Binary (0/1) labels pass through unchanged.

    Raises:
        ParameterError: If a value is outside the scheme's domain.
    """
    values = np.asarray(raw)
    allowed = (-1, 0, 1) if scheme == LabelScheme.ternary else (0, 1)
    bad = ~np.isin(values, allowed)
    if bad.any():
        raise ParameterError(f"{scheme} labels must be in {allowed}, got {sorted(set(values[bad].tolist()))}")
    if scheme == LabelScheme.binary:
        return values.astype(bool)
    return values >= 0


def _threshold_counts(scores: np.ndarray, truths: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return, per distinct score from highest to lowest, (threshold, true positives, false positives) of
    predicting positive every sample scoring at least that threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truths = np.asarray(truths).astype(bool).ravel()
    if scores.shape != truths.shape:
        raise DimensionError(f"{scores.size} scores but {truths.size} truths")
    if not np.all(np.isfinite(scores)):
        raise ParameterError("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truths = truths[order]
    last_of_block = np.ones(len(sorted_scores), dtype=bool)
    last_of_block[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    true_positives = np.cumsum(sorted_truths)[last_of_block]
    predicted = np.flatnonzero(last_of_block) + 1
    return sorted_scores[last_of_block], true_positives, predicted - true_positives


def precision_recall_curve(scores: np.ndarray, truths: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return `(recall, precision, threshold)` at every distinct score, highest threshold first.

    Raises:
        UndefinedMetricError: If there are no positives.
    """
    thresholds, true_positives, false_positives = _threshold_counts(scores, truths)
    positives = int(true_positives[-1]) if len(true_positives) else 0
    if positives == 0:
        raise UndefinedMetricError("precision/recall is undefined without positives")
    recall = true_positives / positives
    precision = true_positives / (true_positives + false_positives)
    return recall, precision, thresholds


def average_precision(scores: np.ndarray, truths: np.ndarray) -> float:
    """Non-interpolated average precision, `sum_n (R_n - R_{n-1}) P_n` over the distinct-score thresholds.

    Raises:
        UndefinedMetricError: If there are no positives.
    """
    recall, precision, _ = precision_recall_curve(scores, truths)
    recall_steps = np.diff(recall, prepend=0.0)
    return float(np.sum(recall_steps * precision))


def roc_curve(scores: np.ndarray, truths: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return `(fpr, tpr, threshold)` starting at (0, 0) (threshold +inf) and ending at (1, 1).

    Raises:
        UndefinedMetricError: If only one class is present.
    """
    thresholds, true_positives, false_positives = _threshold_counts(scores, truths)
    positives = int(true_positives[-1]) if len(true_positives) else 0
    negatives = int(false_positives[-1]) if len(false_positives) else 0
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("ROC is undefined unless both positives and negatives are present")
    fpr = np.concatenate([[0.0], false_positives / negatives])
    tpr = np.concatenate([[0.0], true_positives / positives])
    return fpr, tpr, np.concatenate([[np.inf], thresholds])


def roc_auc(scores: np.ndarray, truths: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve; equals P(positive outscores negative) with ties counted half.

    Raises:
        UndefinedMetricError: If only one class is present.
    """
    fpr, tpr, _ = roc_curve(scores, truths)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def micro_map(scores: np.ndarray, truths: np.ndarray) -> float:
    """Average precision of every (sample, class) pair pooled into one ranking."""
    scores = np.asarray(scores)
    if scores.shape != np.asarray(truths).shape:
        raise DimensionError(f"scores {scores.shape} and truths {np.asarray(truths).shape} differ in shape")
    return average_precision(scores.ravel(), np.asarray(truths).ravel())


def micro_roc_auc(scores: np.ndarray, truths: np.ndarray) -> float:
    """ROC-AUC of every (sample, class) pair pooled into one ranking."""
    scores = np.asarray(scores)
    if scores.shape != np.asarray(truths).shape:
        raise DimensionError(f"scores {scores.shape} and truths {np.asarray(truths).shape} differ in shape")
    return roc_auc(scores.ravel(), np.asarray(truths).ravel())


def macro_mean(values: Sequence[float | None], what: str = "AP") -> float:
    """Mean of the defined (non-None) per-class values.

    Raises:
        UndefinedMetricError: If no value is defined.
    """
    defined = [value for value in values if value is not None]
    if not defined:
        raise UndefinedMetricError(f"no class has a defined {what}")
    return float(np.mean(defined))


def macro_map(per_class_ap: Sequence[float | None]) -> float:
    """Mean of the per-class APs, skipping classes whose AP is undefined (None)."""
    return macro_mean(per_class_ap, "AP")


__all__ = [
    "binarize_eval_labels",
    "precision_recall_curve",
    "average_precision",
    "roc_curve",
    "roc_auc",
    "micro_map",
    "micro_roc_auc",
    "macro_map",
    "macro_mean",
]
