#!/usr/bin/env python3
"""
Classification Metrics

Confusion matrices (rows = truth, columns = prediction) and the overall
accuracy, average per-class accuracy and Cohen's kappa derived from them,
plus mean/standard-deviation summaries over repeated runs.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np


class MetricsError(Exception):
    """Custom exception for malformed confusion matrices and label vectors"""
    pass


@dataclass(eq=False)
class MetricsReport:
    """OA, AA and kappa of one confusion matrix; per_class is None for absent classes."""
    confusion: np.ndarray
    oa: float
    aa: float
    kappa: float
    per_class: List[Optional[float]]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def summary(self) -> str:
        return f"OA={self.oa:.4f} AA={self.aa:.4f} Kappa={self.kappa:.4f} (n={self.total})"


@dataclass
class MetricsSummary:
    """Mean and population standard deviation of each metric over repeated runs."""
    oa_mean: float
    oa_std: float
    aa_mean: float
    aa_std: float
    kappa_mean: float
    kappa_std: float
    runs: int

    def as_dict(self) -> Dict[str, float]:
        return {
            "oa_mean": self.oa_mean, "oa_std": self.oa_std,
            "aa_mean": self.aa_mean, "aa_std": self.aa_std,
            "kappa_mean": self.kappa_mean, "kappa_std": self.kappa_std,
        }


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int], num_classes: int) -> np.ndarray:
    """
    Tally 0-based truth/prediction pairs.

    Raises:
        MetricsError: On mismatched lengths or labels outside [0, num_classes)
    """
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if truth.shape != predicted.shape:
        raise MetricsError(f"truth has {truth.size} labels but predictions have {predicted.size}")
    if num_classes < 1:
        raise MetricsError(f"num_classes must be at least 1, got {num_classes}")
    for name, labels in (("truth", truth), ("prediction", predicted)):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise MetricsError(f"{name} labels must lie in [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    return confusion


def compute_metrics(confusion: np.ndarray) -> MetricsReport:
    """
    Derive OA, AA and kappa from a confusion matrix.

    Rows with no samples are left out of AA. Kappa is reported as 1 when the
    chance agreement p_e equals 1.

    Raises:
        MetricsError: If the matrix is empty, non-square, negative, non-integer
            or sums to zero
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1] or confusion.shape[0] == 0:
        raise MetricsError(f"confusion matrix must be square and non-empty, got shape {list(confusion.shape)}")
    if not np.all(np.isfinite(confusion)) or np.any(confusion != np.round(confusion)):
        raise MetricsError("confusion matrix must hold integer counts")
    if np.any(confusion < 0):
        raise MetricsError("confusion matrix must be non-negative")
    confusion = confusion.astype(np.int64)
    total = int(confusion.sum())
    if total == 0:
        raise MetricsError("confusion matrix has no samples")

    diagonal = np.diag(confusion)
    rows = confusion.sum(axis=1)
    cols = confusion.sum(axis=0)
    oa = float(diagonal.sum()) / total
    per_class: List[Optional[float]] = [float(diagonal[m]) / rows[m] if rows[m] else None
                                        for m in range(len(rows))]
    present = [acc for acc in per_class if acc is not None]
    aa = float(np.mean(present))

    # chance agreement from the row and column marginals
    p_e = float(np.sum(rows.astype(np.float64) * cols)) / float(total) ** 2
    kappa = 1.0 if p_e == 1.0 else (oa - p_e) / (1.0 - p_e)
    return MetricsReport(confusion=confusion, oa=oa, aa=aa, kappa=kappa, per_class=per_class)


def summarize(reports: Sequence[MetricsReport]) -> MetricsSummary:
    """Mean ± std of OA, AA and kappa over repeated runs."""
    if not reports:
        raise MetricsError("nothing to summarize")
    oa = np.array([r.oa for r in reports])
    aa = np.array([r.aa for r in reports])
    kappa = np.array([r.kappa for r in reports])
    # population std
    return MetricsSummary(
        oa_mean=float(oa.mean()), oa_std=float(oa.std()),
        aa_mean=float(aa.mean()), aa_std=float(aa.std()),
        kappa_mean=float(kappa.mean()), kappa_std=float(kappa.std()),
        runs=len(reports),
    )
