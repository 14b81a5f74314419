import unittest

import numpy as np
from numpy.testing import assert_array_equal

from workflows import MetricsError, compute_metrics, confusion_matrix, summarize


def brute_force(confusion):
    """OA, AA and kappa by explicit loops over the matrix."""
    n = len(confusion)
    total = sum(confusion[i][j] for i in range(n) for j in range(n))
    correct = sum(confusion[i][i] for i in range(n))
    accs = []
    for i in range(n):
        row = sum(confusion[i][j] for j in range(n))
        if row:
            accs.append(confusion[i][i] / row)
    chance = 0.0
    for m in range(n):
        row = sum(confusion[m][j] for j in range(n))
        col = sum(confusion[i][m] for i in range(n))
        chance += row * col
    chance /= total * total
    oa = correct / total
    kappa = 1.0 if chance == 1.0 else (oa - chance) / (1.0 - chance)
    return oa, sum(accs) / len(accs), kappa


class TestComputeMetrics(unittest.TestCase):

    def test_hand_example(self):
        """Test [[8, 2], [1, 9]]."""
        report = compute_metrics(np.array([[8, 2], [1, 9]]))
        self.assertAlmostEqual(report.oa, 0.85, places=12)
        self.assertAlmostEqual(report.aa, 0.85, places=12)
        self.assertAlmostEqual(report.kappa, 0.7, places=12)
        self.assertEqual(report.total, 20)
        self.assertEqual(report.summary(), "OA=0.8500 AA=0.8500 Kappa=0.7000 (n=20)")

    def test_perfect_classification(self):
        """Test a diagonal matrix and a single-class matrix."""
        report = compute_metrics(np.diag([3, 5, 7]))
        self.assertEqual((report.oa, report.aa, report.kappa), (1.0, 1.0, 1.0))
        single = compute_metrics(np.array([[4]]))
        self.assertEqual(single.kappa, 1.0)

    def test_chance_level(self):
        """Test that a uniform matrix has kappa 0."""
        report = compute_metrics(np.full((4, 4), 5))
        self.assertAlmostEqual(report.oa, 0.25, places=12)
        self.assertAlmostEqual(report.kappa, 0.0, places=12)

    def test_absent_class_is_left_out_of_aa(self):
        """Test that an empty truth row does not count toward AA."""
        report = compute_metrics(np.array([[4, 0, 0], [0, 0, 0], [1, 0, 1]]))
        self.assertIsNone(report.per_class[1])
        self.assertAlmostEqual(report.aa, 0.75, places=12)

    def test_matches_brute_force(self):
        """Test 1000 random matrices against explicit loops."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            confusion = rng.integers(0, 20, size=(n, n))
            if confusion.sum() == 0:
                confusion[0, 0] = 1
            oa, aa, kappa = brute_force(confusion.tolist())
            report = compute_metrics(confusion)
            self.assertAlmostEqual(report.oa, oa, places=12)
            self.assertAlmostEqual(report.aa, aa, places=12)
            self.assertAlmostEqual(report.kappa, kappa, places=9)

    def test_class_relabeling_invariance(self):
        """Test that permuting classes leaves the metrics unchanged."""
        rng = np.random.default_rng(1)
        confusion = rng.integers(1, 30, size=(5, 5))
        perm = rng.permutation(5)
        original = compute_metrics(confusion)
        permuted = compute_metrics(confusion[perm][:, perm])
        self.assertAlmostEqual(original.oa, permuted.oa, places=12)
        self.assertAlmostEqual(original.aa, permuted.aa, places=12)
        self.assertAlmostEqual(original.kappa, permuted.kappa, places=12)

    def test_invalid_matrices(self):
        """Test empty, non-square, negative, fractional and zero-sum matrices."""
        for bad in (np.zeros((0, 0)), np.ones((2, 3)), np.array([[1, -1], [0, 2]]),
                    np.array([[1.5, 0.0], [0.0, 1.0]]), np.zeros((2, 2))):
            with self.assertRaises(MetricsError):
                compute_metrics(bad)


class TestConfusionMatrix(unittest.TestCase):

    def test_tally(self):
        """Test rows as truth and columns as prediction."""
        confusion = confusion_matrix([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], 2)
        assert_array_equal(confusion, [[1, 1], [1, 2]])

    def test_invalid_labels(self):
        """Test length mismatches and out-of-range labels."""
        with self.assertRaises(MetricsError):
            confusion_matrix([0, 1], [0], 2)
        with self.assertRaises(MetricsError):
            confusion_matrix([0, 2], [0, 1], 2)
        with self.assertRaises(MetricsError):
            confusion_matrix([0, 1], [-1, 1], 2)


class TestSummarize(unittest.TestCase):

    def test_mean_and_population_std(self):
        """Test two runs with OA 1.0 and 0.5."""
        summary = summarize([compute_metrics(np.diag([2, 2])), compute_metrics(np.array([[1, 1], [1, 1]]))])
        self.assertEqual(summary.runs, 2)
        self.assertAlmostEqual(summary.oa_mean, 0.75, places=12)
        self.assertAlmostEqual(summary.oa_std, 0.25, places=12)
        self.assertAlmostEqual(summary.kappa_mean, 0.5, places=12)
        self.assertEqual(set(summary.as_dict()), {"oa_mean", "oa_std", "aa_mean", "aa_std", "kappa_mean", "kappa_std"})

    def test_nothing_to_summarize(self):
        """Test an empty list of reports."""
        with self.assertRaises(MetricsError):
            summarize([])


if __name__ == '__main__':
    unittest.main()
