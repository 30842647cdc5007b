import tempfile

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from binning.targets import BinSpec
from binning.weights import class_weights
from core.exceptions import ContractError, DataError
from core.utils import FileUtils
from metrics.losses import cross_entropy, weighted_cce
from metrics.reports import REPORT_HEADER, build_report
from metrics.scores import (
    PredictionBatch, bw_crps, bw_mae, bw_top_k, crps, expected_value, pmf_to_cmf, top_k_accuracy, top_k_indices,
)
from numerics import ops
from numerics.gradcheck import max_gradient_error
from numerics.tensor import Tensor


def degenerate(index, n):
    probs = np.zeros(n)
    probs[index] = 1.0
    return probs


def brute_force_crps(probs, label):
    total, running = 0.0, 0.0
    for i, p in enumerate(probs):
        running += p
        indicator = 1.0 if label <= i else 0.0
        total += (running - indicator) ** 2
    return total


class WeightedCrossEntropyTests(SimpleTestCase):
    """Testes da perda ponderada"""

    def test_certain_prediction_is_zero(self):
        probs = np.array([[0.0, 1.0, 0.0]])
        self.assertEqual(weighted_cce(probs, [1], np.array([5.0, 5.0, 5.0])).item(), 0.0)

    def test_uniform_probs(self):
        probs = np.full((1, 4), 0.25)
        self.assertAlmostEqual(weighted_cce(probs, [2], np.ones(4)).item(), np.log(4), places=12)
        self.assertAlmostEqual(weighted_cce(probs, [2], np.array([1.0, 1.0, 2.0, 1.0])).item(), 2 * np.log(4), places=12)

    def test_unit_weights_equal_plain_cross_entropy(self):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(6), size=10)
        labels = rng.integers(6, size=10)
        plain = -np.mean(np.log(probs[np.arange(10), labels]))
        self.assertAlmostEqual(weighted_cce(probs, labels, np.ones(6)).item(), plain, delta=1e-12)
        self.assertAlmostEqual(cross_entropy(probs, labels).item(), plain, delta=1e-12)

    def test_class_weights_object_is_accepted(self):
        weights = class_weights([0] * 90 + [1] * 10, n=2)
        loss = weighted_cce(np.array([[0.5, 0.5]]), [1], weights).item()
        self.assertAlmostEqual(loss, weights.w[1] * np.log(2), places=12)

    def test_zero_probability_hits_floor(self):
        loss = weighted_cce(np.array([[1.0, 0.0]]), [1]).item()
        self.assertAlmostEqual(loss, -np.log(1e-12), places=6)

    def test_label_out_of_range(self):
        with self.assertRaises(ContractError):
            weighted_cce(np.full((1, 3), 1 / 3), [3])

    def test_gradient_through_softmax(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.normal(size=(5, 7)), requires_grad=True)
        labels = rng.integers(7, size=5)
        weights = rng.uniform(0.1, 3.0, size=7)
        error = max_gradient_error(lambda: weighted_cce(ops.softmax(logits), labels, weights), [logits])
        self.assertLessEqual(error, 1e-4)


class CrpsTests(SimpleTestCase):
    """Testes do CRPS categórico"""

    def test_cmf_examples(self):
        np.testing.assert_array_equal(pmf_to_cmf([1.0, 0.0, 0.0]), [1.0, 1.0, 1.0])
        np.testing.assert_allclose(pmf_to_cmf([0.25, 0.25, 0.5]), [0.25, 0.5, 1.0])

    def test_cmf_matches_loop(self):
        probs = np.random.default_rng(2).dirichlet(np.ones(12))
        running, expected = 0.0, []
        for p in probs:
            running += p
            expected.append(running)
        np.testing.assert_array_equal(pmf_to_cmf(probs), expected)
        self.assertAlmostEqual(pmf_to_cmf(probs)[-1], 1.0, delta=1e-9)

    def test_perfect_forecast(self):
        self.assertEqual(crps(pmf_to_cmf(degenerate(3, 8)), 3), 0.0)

    def test_uniform_two_bins(self):
        self.assertAlmostEqual(crps(pmf_to_cmf([0.5, 0.5]), 0), 0.25)

    def test_degenerate_pairs_equal_bin_distance(self):
        n = 16
        for i in range(n):
            for j in range(n):
                self.assertEqual(crps(pmf_to_cmf(degenerate(j, n)), i), abs(i - j))

    def test_random_distributions_match_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            probs = rng.dirichlet(np.ones(16))
            label = int(rng.integers(16))
            self.assertAlmostEqual(crps(pmf_to_cmf(probs), label), brute_force_crps(probs, label), delta=1e-12)

    @hyp_settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=9), st.integers(min_value=0, max_value=9),
           st.floats(min_value=0.0, max_value=1.0), st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_moving_mass_toward_truth_never_increases(self, label, source, fraction, seed):
        probs = np.random.default_rng(seed).dirichlet(np.ones(10))
        if source == label:
            return
        step = 1 if label > source else -1
        target = int(np.random.default_rng(seed + 1).integers(source + step, label + step, endpoint=False)) \
            if step == 1 else int(np.random.default_rng(seed + 1).integers(label, source))
        moved = probs.copy()
        mass = probs[source] * fraction
        moved[source] -= mass
        moved[target] += mass
        self.assertLessEqual(crps(pmf_to_cmf(moved), label), crps(pmf_to_cmf(probs), label) + 1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            self.assertGreaterEqual(crps(pmf_to_cmf(rng.dirichlet(np.ones(8))), int(rng.integers(8))), 0.0)


class BinWeightedTests(SimpleTestCase):
    """Testes das métricas ponderadas por classe"""

    def test_perfect_predictions(self):
        labels = [0, 0, 0, 2, 5]
        batch = PredictionBatch(np.array([degenerate(i, 8) for i in labels]), labels)
        self.assertEqual(bw_top_k(batch), 1.0)
        self.assertEqual(bw_crps(batch), 0.0)

    def test_fixed_ranking_predictor(self):
        ranking = np.array([0.4, 0.3, 0.2] + [0.1 / 7] * 7)
        only_zero = PredictionBatch(np.tile(ranking, (4, 1)), [0, 0, 0, 0])
        self.assertEqual(bw_top_k(only_zero), 1.0)
        mixed = PredictionBatch(np.tile(ranking, (4, 1)), [0, 9, 0, 9])
        self.assertEqual(bw_top_k(mixed), 0.5)

    def test_majority_predictor_on_imbalanced_set(self):
        labels = [0] * 99 + [1]
        probs = np.tile([1.0, 0.0], (100, 1))
        batch = PredictionBatch(probs, labels)
        self.assertEqual(bw_top_k(batch, k=1), 0.5)
        self.assertEqual(top_k_accuracy(batch, k=1), 0.99)

    def test_tie_break_prefers_lower_bin(self):
        np.testing.assert_array_equal(top_k_indices(np.full(6, 1 / 6), 3), [[0, 1, 2]])

    def test_bw_crps_two_classes(self):
        batch = PredictionBatch(np.tile(degenerate(0, 8), (5, 1)), [0, 0, 0, 4, 4])
        self.assertEqual(bw_crps(batch), 2.0)

    def test_balanced_batch_equals_plain_means(self):
        rng = np.random.default_rng(5)
        labels = np.repeat([1, 3, 6], 4)
        batch = PredictionBatch(rng.dirichlet(np.ones(8), size=12), labels)
        report = build_report(batch)
        self.assertAlmostEqual(report.bw_crps, report.crps_mean, delta=1e-12)
        self.assertAlmostEqual(report.bw_top3, top_k_accuracy(batch), delta=1e-12)

    def test_empty_batch(self):
        batch = PredictionBatch(np.zeros((0, 4)), [])
        with self.assertRaises(DataError):
            bw_crps(batch)
        with self.assertRaises(DataError):
            bw_top_k(batch)

    def test_empty_lists_are_a_data_error(self):
        batch = PredictionBatch([], [])
        self.assertEqual(batch.size, 0)
        with self.assertRaises(DataError):
            bw_top_k(batch)
        with self.assertRaises(DataError):
            bw_crps(batch)

    def test_rows_must_sum_to_one(self):
        with self.assertRaises(ContractError):
            PredictionBatch(np.array([[0.5, 0.4]]), [0])

    def test_expected_value_and_bw_mae(self):
        spec = BinSpec(y_min=0.0, y_max=3.0, n=4)
        probs = np.array([degenerate(0, 4), [0.0, 0.5, 0.5, 0.0]])
        np.testing.assert_allclose(expected_value(probs, spec), [0.0, 1.5])
        batch = PredictionBatch(probs, [0, 2], targets=[0.0, 2.0])
        self.assertAlmostEqual(bw_mae(batch, spec), 0.25)


class ReportTests(SimpleTestCase):
    """Testes do relatório de métricas"""

    def test_csv_layout(self):
        rng = np.random.default_rng(6)
        batch = PredictionBatch(rng.dirichlet(np.ones(5), size=9), [0, 0, 0, 0, 0, 1, 1, 4, 4])
        report = build_report(batch, class_weights(batch.labels, 5))
        self.assertEqual([item.bin for item in report.per_class], [0, 1, 4])
        self.assertEqual(report.samples, 9)
        with tempfile.TemporaryDirectory() as tmp:
            rows = FileUtils.read_csv(report.to_csv(f'{tmp}/report.csv'))
            with open(f'{tmp}/report.csv', encoding='utf-8') as handle:
                header = handle.readline().strip()
        self.assertEqual(header, ','.join(REPORT_HEADER))
        self.assertEqual([row['kind'] for row in rows], ['class', 'class', 'class', 'summary'])
        self.assertEqual(float(rows[-1]['bw_crps']), report.bw_crps)

    def test_report_is_deterministic(self):
        rng = np.random.default_rng(7)
        batch = PredictionBatch(rng.dirichlet(np.ones(5), size=20), rng.integers(5, size=20))
        self.assertEqual(build_report(batch), build_report(batch))
