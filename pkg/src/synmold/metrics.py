"""Binary-classification metrics: accuracy, MSE loss, F1, AUC-ROC.

Good is the positive class (target 1.0). Threshold ties (score exactly at
the threshold) count as positive, matching the classifier's tie rule.
The rank-sum AUC estimator with midrank tie correction equals the O(n^2)
pairwise definition exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "EvalResult",
    "confusion_counts",
    "accuracy",
    "f1",
    "auc_roc",
    "loss_mse",
    "evaluate_scores",
    "aggregate_runs",
]

METRIC_FIELDS = ("accuracy", "loss", "f1", "auc_roc")


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    loss: float
    f1: float
    auc_roc: float
    confusion: tuple[int, int, int, int]  # (TP, FP, TN, FN)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "loss": self.loss,
            "f1": self.f1,
            "auc_roc": self.auc_roc,
            "confusion": list(self.confusion),
        }


def _as_arrays(scores, targets) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if s.shape != t.shape:
        raise ValueError(f"scores and targets differ in length: {s.shape} vs {t.shape}")
    if s.size == 0:
        raise ValueError("metrics are undefined for empty inputs")
    return s, t


def confusion_counts(
    scores, targets, threshold: float = 0.5
) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with score >= threshold predicting positive."""
    s, t = _as_arrays(scores, targets)
    pred = s >= threshold
    actual = t == 1.0
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    tn = int(np.sum(~pred & ~actual))
    fn = int(np.sum(~pred & actual))
    return tp, fp, tn, fn


def accuracy(scores, targets, threshold: float = 0.5) -> float:
    tp, fp, tn, fn = confusion_counts(scores, targets, threshold)
    return (tp + tn) / (tp + fp + tn + fn)


def f1(scores, targets, threshold: float = 0.5) -> float:
    """F1 for the positive class; 0.0 when the denominator degenerates."""
    tp, fp, tn, fn = confusion_counts(scores, targets, threshold)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def loss_mse(scores, targets) -> float:
    s, t = _as_arrays(scores, targets)
    return float(np.mean((s - t) ** 2))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j (0-based) share the midrank
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_roc(scores, targets) -> float:
    """Probability that a random positive outscores a random negative,
    counting ties as one half; computed via rank sums in O(n log n)."""
    s, t = _as_arrays(scores, targets)
    pos = t == 1.0
    n_pos = int(pos.sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs at least one positive and one negative sample")
    ranks = _midranks(s)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate_scores(scores, targets, threshold: float = 0.5) -> EvalResult:
    """All four metrics plus the confusion counts in one pass."""
    return EvalResult(
        accuracy=accuracy(scores, targets, threshold),
        loss=loss_mse(scores, targets),
        f1=f1(scores, targets, threshold),
        auc_roc=auc_roc(scores, targets),
        confusion=confusion_counts(scores, targets, threshold),
    )


def aggregate_runs(
    results: Sequence[EvalResult],
) -> tuple[dict[str, float], dict[str, float]]:
    """Per-field arithmetic mean and population standard deviation.

    The standard deviations are an extension over the plain per-level means
    and are labeled as such wherever they are reported.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for field in METRIC_FIELDS:
        values = np.array([getattr(r, field) for r in results], dtype=np.float64)
        mean[field] = float(values.mean())
        std[field] = float(values.std(ddof=0))
    return mean, std
