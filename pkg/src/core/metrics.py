"""
Clustering evaluation: ACC, NMI, ARI, pairwise F1 and Calinski-Harabasz.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.exceptions import (ConsistencyError, InfiniteSeparationError,
                             MetricError, ParameterError)

logger = logging.getLogger(__name__)

METRIC_VARIANTS = {'nmi': 'geometric', 'f1': 'pairwise', 'acc': 'hungarian'}


@dataclass(eq=False)
class ContingencyTable:
    """Counts of (true class, predicted cluster) pairs."""
    counts: np.ndarray
    classes: np.ndarray
    clusters: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency_table(true_labels, pred_labels) -> ContingencyTable:
    true = np.asarray(true_labels).ravel()
    pred = np.asarray(pred_labels).ravel()
    if true.size != pred.size:
        raise ConsistencyError(
            f"label lengths differ: {true.size} true vs {pred.size} predicted")
    if true.size == 0:
        raise ParameterError("labelings must be nonempty")
    classes, t_idx = np.unique(true, return_inverse=True)
    clusters, p_idx = np.unique(pred, return_inverse=True)
    counts = np.zeros((classes.size, clusters.size), dtype=np.int64)
    np.add.at(counts, (t_idx, p_idx), 1)
    return ContingencyTable(counts, classes, clusters)


def _comb2(values) -> int:
    return sum(int(v) * (int(v) - 1) // 2 for v in np.asarray(values).ravel())


def accuracy(true_labels, pred_labels) -> float:
    """Best one-to-one matched fraction (Hungarian algorithm)."""
    table = contingency_table(true_labels, pred_labels)
    size = max(table.counts.shape)
    square = np.zeros((size, size), dtype=np.int64)
    square[:table.counts.shape[0], :table.counts.shape[1]] = table.counts
    rows, cols = linear_sum_assignment(-square)
    return float(square[rows, cols].sum()) / table.n


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(true_labels, pred_labels) -> float:
    """Mutual information normalized by sqrt(H(T) H(P)), natural log."""
    table = contingency_table(true_labels, pred_labels)
    n = table.n
    h_true = _entropy(table.counts.sum(axis=1), n)
    h_pred = _entropy(table.counts.sum(axis=0), n)
    if h_true == 0.0 and h_pred == 0.0:
        # both partitions are a single cluster
        return 1.0
    if h_true == 0.0 or h_pred == 0.0:
        return 0.0
    a = table.counts.sum(axis=1)[:, None]
    b = table.counts.sum(axis=0)[None, :]
    nz = table.counts > 0
    nij = table.counts[nz]
    mi = float(np.sum(nij / n * np.log(n * nij / (a * b)[nz])))
    return float(min(max(mi / np.sqrt(h_true * h_pred), 0.0), 1.0))


def ari(true_labels, pred_labels) -> float:
    """Adjusted Rand index with exact integer pair counts."""
    table = contingency_table(true_labels, pred_labels)
    total = table.n * (table.n - 1) // 2
    if total == 0:
        return 1.0
    index = _comb2(table.counts)
    sum_a = _comb2(table.counts.sum(axis=1))
    sum_b = _comb2(table.counts.sum(axis=0))
    expected = Fraction(sum_a * sum_b, total)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def pairwise_f1(true_labels, pred_labels) -> float:
    """F1 of same-cluster decisions over all unordered pairs."""
    table = contingency_table(true_labels, pred_labels)
    tp = _comb2(table.counts)
    if tp == 0:
        return 0.0
    predicted_pairs = _comb2(table.counts.sum(axis=0))
    true_pairs = _comb2(table.counts.sum(axis=1))
    return 2.0 * tp / (predicted_pairs + true_pairs)


def calinski_harabasz(points, labels, n_clusters: Optional[int] = None) -> float:
    """
    Between/within scatter ratio, each over its degrees of freedom.

    Args:
        points: N x d array
        labels: Cluster id per point
        n_clusters: Expected cluster count; unused ids count as empty clusters

    Raises:
        InfiniteSeparationError: within-cluster scatter is zero
        MetricError: within and between scatter are both zero
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels).ravel()
    if labels.size != x.shape[0]:
        raise ConsistencyError(f"{labels.size} labels for {x.shape[0]} points")
    ids, inverse = np.unique(labels, return_inverse=True)
    if n_clusters is not None and ids.size < n_clusters:
        raise ParameterError(f"{n_clusters - ids.size} of {n_clusters} clusters are empty")
    k, n = ids.size, x.shape[0]
    if k < 2:
        raise ParameterError("Calinski-Harabasz needs at least 2 clusters")
    if k >= n:
        raise ParameterError(f"Calinski-Harabasz needs N > k, got N={n}, k={k}")

    overall = x.mean(axis=0)
    between = 0.0
    within = 0.0
    for c in range(k):
        members = x[inverse == c]
        center = members.mean(axis=0)
        between += members.shape[0] * float(np.sum((center - overall) ** 2))
        within += float(np.sum((members - center) ** 2))
    if within == 0.0:
        if between == 0.0:
            raise MetricError("all points coincide; between and within scatter are zero")
        raise InfiniteSeparationError("within-cluster scatter is zero")
    return (between / (k - 1)) / (within / (n - k))


def evaluate(true_labels, pred_labels, features=None) -> Dict[str, Optional[float]]:
    """
    All scores for one labeling; 'ch' is None when undefined.
    """
    scores = {
        'acc': accuracy(true_labels, pred_labels),
        'nmi': nmi(true_labels, pred_labels),
        'ari': ari(true_labels, pred_labels),
        'f1': pairwise_f1(true_labels, pred_labels),
        'ch': None,
    }
    if features is not None:
        try:
            scores['ch'] = calinski_harabasz(features, pred_labels)
        except (MetricError, ParameterError) as e:
            logger.info("ch score undefined: %s", e)
    return scores
