"""
Unit tests for clustering metrics against brute-force oracles.
"""
import os
import sys
from itertools import combinations, permutations

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.exceptions import (ConsistencyError, InfiniteSeparationError, MetricError,
                             ParameterError)
from core.metrics import (METRIC_VARIANTS, accuracy, ari, calinski_harabasz,
                          contingency_table, evaluate, nmi, pairwise_f1)


def brute_force_accuracy(true, pred, k):
    best = 0
    for perm in permutations(range(k)):
        best = max(best, sum(1 for t, p in zip(true, pred) if perm[p] == t))
    return best / len(true)


def pair_counts(true, pred):
    same_both = same_true = same_pred = 0
    for i, j in combinations(range(len(true)), 2):
        st, sp = true[i] == true[j], pred[i] == pred[j]
        same_both += st and sp
        same_true += st
        same_pred += sp
    return same_both, same_true, same_pred


def direct_nmi(true, pred):
    n = len(true)
    classes, clusters = sorted(set(true)), sorted(set(pred))
    mi = 0.0
    for a in classes:
        for b in clusters:
            nij = sum(1 for t, p in zip(true, pred) if t == a and p == b)
            if nij:
                na = true.count(a)
                nb = pred.count(b)
                mi += nij / n * np.log(n * nij / (na * nb))
    h_true = -sum(true.count(a) / n * np.log(true.count(a) / n) for a in classes)
    h_pred = -sum(pred.count(b) / n * np.log(pred.count(b) / n) for b in clusters)
    return mi / np.sqrt(h_true * h_pred)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.mark.unit
class TestAccuracy:
    """Test cases for Hungarian-matched accuracy."""

    def test_permuted_labels(self):
        assert accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0

    def test_half_right(self):
        assert accuracy([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(k, 30))
            true = rng.integers(0, k, n).tolist()
            pred = rng.integers(0, k, n).tolist()
            assert accuracy(true, pred) == pytest.approx(brute_force_accuracy(true, pred, k))

    def test_balanced_lower_bound(self, rng):
        true = np.repeat(np.arange(4), 25)
        for _ in range(20):
            assert accuracy(true, rng.integers(0, 4, 100)) >= 0.25

    def test_unequal_cluster_counts(self):
        assert accuracy([0, 0, 1, 1, 2, 2], [0, 0, 0, 0, 1, 1]) == pytest.approx(4 / 6)

    def test_length_mismatch(self):
        with pytest.raises(ConsistencyError):
            accuracy([0, 1], [0])


@pytest.mark.unit
class TestInformationAndPairScores:
    """Test cases for NMI, ARI and pairwise F1."""

    def test_identical_labelings(self):
        labels = [0, 0, 1, 1, 2, 2, 2]
        assert nmi(labels, labels) == pytest.approx(1.0)
        assert ari(labels, labels) == 1.0
        assert pairwise_f1(labels, labels) == 1.0

    def test_single_cluster_prediction(self):
        true = [0, 0, 1, 1]
        assert nmi(true, [5, 5, 5, 5]) == 0.0
        assert ari(true, [5, 5, 5, 5]) == 0.0

    def test_singletons_have_no_true_positives(self):
        assert pairwise_f1([0, 0, 1, 1], [0, 1, 2, 3]) == 0.0

    def test_nmi_matches_direct_sum(self, rng):
        for _ in range(200):
            true = rng.integers(0, 3, 40).tolist()
            pred = rng.integers(0, 3, 40).tolist()
            assert nmi(true, pred) == pytest.approx(direct_nmi(true, pred), abs=1e-12)

    def test_ari_matches_pair_enumeration(self, rng):
        for _ in range(200):
            true = rng.integers(0, 3, 25).tolist()
            pred = rng.integers(0, 4, 25).tolist()
            both, same_true, same_pred = pair_counts(true, pred)
            total = 25 * 24 / 2
            expected = same_true * same_pred / total
            oracle = (both - expected) / ((same_true + same_pred) / 2 - expected)
            assert ari(true, pred) == pytest.approx(oracle, abs=1e-12)

    def test_f1_matches_pair_enumeration(self, rng):
        for _ in range(200):
            true = rng.integers(0, 3, 25).tolist()
            pred = rng.integers(0, 4, 25).tolist()
            both, same_true, same_pred = pair_counts(true, pred)
            precision, recall = both / same_pred, both / same_true
            oracle = 2 * precision * recall / (precision + recall)
            assert pairwise_f1(true, pred) == pytest.approx(oracle, abs=1e-12)

    def test_relabeling_invariance(self, rng):
        true = rng.integers(0, 4, 60)
        pred = rng.integers(0, 4, 60)
        relabeled = np.array([3, 0, 2, 1])[pred]
        for score in (accuracy, nmi, ari, pairwise_f1):
            assert score(true, relabeled) == pytest.approx(score(true, pred), abs=1e-12)
            assert score(relabeled, true) == pytest.approx(score(pred, true), abs=1e-12)

    def test_against_scikit_learn(self, rng):
        sk_metrics = pytest.importorskip("sklearn.metrics")
        true = rng.integers(0, 5, 300)
        pred = rng.integers(0, 5, 300)
        assert nmi(true, pred) == pytest.approx(
            sk_metrics.normalized_mutual_info_score(true, pred, average_method='geometric'))
        assert ari(true, pred) == pytest.approx(sk_metrics.adjusted_rand_score(true, pred))

    def test_contingency_table(self):
        table = contingency_table(['a', 'a', 'b'], [1, 2, 2])
        np.testing.assert_array_equal(table.counts, [[1, 1], [0, 1]])
        assert table.n == 3


@pytest.mark.unit
class TestCalinskiHarabasz:
    """Test cases for the Calinski-Harabasz score."""

    def test_point_masses_have_infinite_separation(self):
        points = np.array([[0.0, 0.0]] * 3 + [[1.0, 0.0]] * 3)
        with pytest.raises(InfiniteSeparationError):
            calinski_harabasz(points, [0, 0, 0, 1, 1, 1])

    def test_identical_points(self):
        with pytest.raises(MetricError) as excinfo:
            calinski_harabasz(np.ones((6, 2)), [0, 0, 0, 1, 1, 1])
        assert not isinstance(excinfo.value, InfiniteSeparationError)

    def test_tighter_blobs_score_higher(self, rng):
        base = rng.standard_normal((50, 2))
        labels = [0] * 25 + [1] * 25
        shift = np.array([[0.0, 0.0]] * 25 + [[5.0, 0.0]] * 25)
        tight = calinski_harabasz(0.1 * base + shift, labels)
        loose = calinski_harabasz(1.0 * base + shift, labels)
        assert tight > loose

    def test_matches_scikit_learn(self, rng):
        sk_metrics = pytest.importorskip("sklearn.metrics")
        points = rng.standard_normal((90, 3))
        labels = rng.integers(0, 3, 90)
        assert calinski_harabasz(points, labels) == pytest.approx(
            sk_metrics.calinski_harabasz_score(points, labels))

    def test_cluster_count_checks(self):
        with pytest.raises(ParameterError):
            calinski_harabasz(np.random.default_rng(0).random((5, 2)), [0] * 5)
        with pytest.raises(ParameterError):
            calinski_harabasz(np.random.default_rng(0).random((5, 2)), [0, 0, 1, 1, 1],
                              n_clusters=3)


@pytest.mark.unit
class TestEvaluate:

    def test_all_scores(self):
        scores = evaluate([0, 0, 1, 1], [0, 1, 0, 1], features=np.arange(8.0).reshape(4, 2))
        assert set(scores) == {'acc', 'nmi', 'ari', 'f1', 'ch'}
        assert scores['acc'] == 0.5
        assert scores['ch'] is not None

    def test_undefined_ch_is_none(self):
        points = np.array([[0.0], [0.0], [1.0], [1.0]])
        scores = evaluate([0, 0, 1, 1], [0, 0, 1, 1], features=points)
        assert scores['ch'] is None
        assert scores['acc'] == 1.0

    def test_variants_are_named(self):
        assert METRIC_VARIANTS['nmi'] == 'geometric'
