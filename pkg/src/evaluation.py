"""
Clustering evaluation module
ARI and AMI over two labelings, and per-point label extraction from spans
(labels are for evaluation only, never a private output)
"""

import logging
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np
from scipy.stats import entropy
from sklearn.metrics import adjusted_mutual_info_score, adjusted_rand_score, mutual_info_score
from sklearn.metrics.cluster import contingency_matrix, pair_confusion_matrix

from .dbscan_oracle import Labeling
from .dp_dbscan import SpanSet, classify_many
from .errors import ParameterError

logger = logging.getLogger(__name__)

LabelsLike = Union[Labeling, np.ndarray, list]


def _as_labels(labels: LabelsLike) -> np.ndarray:
    if isinstance(labels, Labeling):
        return labels.labels
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ParameterError(f"Labels must be one-dimensional, got shape {arr.shape}")
    return arr


def _check_pair(labels_a: LabelsLike, labels_b: LabelsLike):
    a, b = _as_labels(labels_a), _as_labels(labels_b)
    if a.shape[0] != b.shape[0]:
        raise ParameterError(f"Labelings differ in length: {a.shape[0]} vs {b.shape[0]}")
    return a, b


@dataclass(frozen=True)
class ContingencyTable:
    """Co-occurrence counts n_ij between the blocks of two labelings"""
    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    total: int

    @classmethod
    def from_labels(cls, labels_a: LabelsLike, labels_b: LabelsLike) -> "ContingencyTable":
        a, b = _check_pair(labels_a, labels_b)
        if a.shape[0] == 0:
            counts = np.zeros((0, 0), dtype=np.int64)
        else:
            counts = contingency_matrix(a, b).astype(np.int64)
        return cls(counts=counts, row_sums=counts.sum(axis=1), col_sums=counts.sum(axis=0),
                   total=int(a.shape[0]))

    def mutual_information(self) -> float:
        if self.total == 0:
            return 0.0
        return float(mutual_info_score(None, None, contingency=self.counts))

    def row_entropy(self) -> float:
        return float(entropy(self.row_sums)) if self.total else 0.0

    def col_entropy(self) -> float:
        return float(entropy(self.col_sums)) if self.total else 0.0


def pair_counts(labels_a: LabelsLike, labels_b: LabelsLike) -> np.ndarray:
    """2x2 pair confusion [[tn, fp], [fn, tp]] over ordered pairs of distinct points"""
    a, b = _check_pair(labels_a, labels_b)
    return pair_confusion_matrix(a, b)


def ari(labels_a: LabelsLike, labels_b: LabelsLike) -> float:
    """Adjusted Rand index; noise (0) is an ordinary label"""
    a, b = _check_pair(labels_a, labels_b)
    return float(adjusted_rand_score(a, b))


def ami(labels_a: LabelsLike, labels_b: LabelsLike) -> float:
    """Adjusted mutual information with the arithmetic-mean entropy normalizer"""
    a, b = _check_pair(labels_a, labels_b)
    return float(adjusted_mutual_info_score(a, b, average_method="arithmetic"))


def extract_labels(span_set: SpanSet, points) -> Labeling:
    """Per-point span ids for evaluation; span ids are kept as released"""
    return Labeling.from_array(classify_many(span_set, points))


def coverage_report(labeling: Labeling, num_spans: int) -> Dict[str, float]:
    n = len(labeling)
    covered = int(np.count_nonzero(labeling.labels)) if n else 0
    return {
        "span_count": int(num_spans),
        "n_points": n,
        "covered_fraction": covered / n if n else 0.0,
        "noise_fraction": (n - covered) / n if n else 0.0,
    }
