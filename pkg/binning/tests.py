import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from binning.normalization import NormStats, compute_stats, denormalize, normalize
from binning.targets import (
    BinSpec, SampleRecord, bin_center, derive_target, one_hot, relabel, to_bin, to_bins,
)
from binning.weights import class_weights
from core.exceptions import ConfigError, ContractError, DataError


class DeriveTargetTests(SimpleTestCase):
    """Testes do alvo de chuva acumulada"""

    def test_zero_field(self):
        self.assertEqual(derive_target(np.zeros((16, 32, 32))), 0.0)

    def test_constant_one_mm_per_hour(self):
        self.assertEqual(derive_target(np.ones((16, 32, 32))), 4.0)

    def test_matches_triple_loop(self):
        r = np.random.default_rng(0).exponential(size=(3, 4, 5))
        total = 0.0
        for t in range(3):
            for i in range(4):
                for j in range(5):
                    total += r[t, i, j]
        self.assertAlmostEqual(derive_target(r), 4.0 * total / 60, delta=1e-12)

    def test_linearity(self):
        r = np.random.default_rng(1).exponential(size=(16, 8, 8))
        for alpha in (0.5, 2.0, 7.25):
            self.assertAlmostEqual(derive_target(alpha * r), alpha * derive_target(r), delta=1e-12)

    def test_negative_rain_is_data_error(self):
        r = np.zeros((2, 2, 2))
        r[1, 1, 1] = -0.1
        with self.assertRaises(DataError):
            derive_target(r)


class BinSpecTests(SimpleTestCase):
    """Testes da discretização em classes"""

    def setUp(self):
        self.spec = BinSpec(y_min=0.0, y_max=3.0, n=4)

    def test_endpoints(self):
        self.assertEqual(to_bin(0.0, self.spec), 0)
        self.assertEqual(to_bin(3.0, self.spec), 3)
        self.assertEqual(bin_center(0, self.spec), 0.0)
        self.assertEqual(bin_center(3, self.spec), 3.0)

    def test_tie_rounds_away_from_zero(self):
        self.assertEqual(to_bin(1.5, self.spec), 2)
        self.assertEqual(to_bin(0.5, self.spec), 1)

    def test_out_of_range_is_clamped(self):
        self.assertEqual(to_bin(-10.0, self.spec), 0)
        self.assertEqual(to_bin(99.0, self.spec), 3)

    def test_bin_center_range(self):
        with self.assertRaises(ContractError):
            bin_center(4, self.spec)

    def test_invalid_spec(self):
        with self.assertRaises(ConfigError):
            BinSpec(y_min=1.0, y_max=1.0, n=4)
        with self.assertRaises(ConfigError):
            BinSpec(y_min=0.0, y_max=1.0, n=1)

    def test_round_trip_within_half_step(self):
        spec = BinSpec(y_min=0.2, y_max=41.7, n=64)
        targets = np.random.default_rng(2).uniform(spec.y_min, spec.y_max, size=1000)
        for y in targets:
            self.assertLessEqual(abs(bin_center(to_bin(y, spec), spec) - y), spec.delta / 2 + 1e-12)

    def test_monotone_over_sorted_sweep(self):
        spec = BinSpec(y_min=0.0, y_max=10.0, n=16)
        sweep = np.sort(np.random.default_rng(3).uniform(-2, 12, size=2000))
        indices = [to_bin(y, spec) for y in sweep]
        self.assertTrue(all(a <= b for a, b in zip(indices, indices[1:])))
        np.testing.assert_array_equal(to_bins(sweep, spec), indices)

    def test_from_targets_and_degenerate_range(self):
        spec = BinSpec.from_targets([0.0, 3.5, 1.0], n=8)
        self.assertEqual((spec.y_min, spec.y_max), (0.0, 3.5))
        with self.assertLogs('binning.targets', level='WARNING'):
            flat = BinSpec.from_targets([0.0, 0.0], n=8)
        self.assertEqual(flat.delta, 1.0)
        self.assertEqual(to_bin(0.0, flat), 0)

    def test_meta_round_trip(self):
        self.assertEqual(BinSpec.from_meta(self.spec.to_meta()), self.spec)

    @hyp_settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=-100, max_value=100), st.floats(min_value=0.0, max_value=50.0))
    def test_monotone_property(self, y, gap):
        spec = BinSpec(y_min=-5.0, y_max=60.0, n=32)
        self.assertLessEqual(to_bin(y, spec), to_bin(y + gap, spec))


class OneHotTests(SimpleTestCase):
    """Testes do vetor one-hot"""

    def test_values(self):
        np.testing.assert_array_equal(one_hot(0, 3), [1, 0, 0])
        np.testing.assert_array_equal(one_hot(2, 3), [0, 0, 1])
        for i in range(5):
            self.assertEqual(one_hot(i, 5).sum(), 1.0)

    def test_range_error(self):
        with self.assertRaises(ContractError):
            one_hot(3, 3)


class NormalizationTests(SimpleTestCase):
    """Testes da normalização por canal"""

    def test_single_constant_sample_is_degenerate(self):
        x = np.full((2, 3, 4, 4), 5.0)
        with self.assertLogs('binning.normalization', level='WARNING'):
            stats = compute_stats([x])
        self.assertEqual(stats.x_min, stats.x_max)
        np.testing.assert_array_equal(normalize(x, stats), np.zeros_like(x))

    def test_two_samples_brute_force_scan(self):
        rng = np.random.default_rng(4)
        samples = [rng.normal(size=(2, 3, 4, 4)) for _ in range(2)]
        stats = compute_stats(samples)
        for c in range(3):
            values = [v for s in samples for v in s[:, c].reshape(-1)]
            self.assertEqual(stats.x_min[c], min(values))
            self.assertEqual(stats.x_max[c], max(values))

    def test_endpoints_and_inverse(self):
        rng = np.random.default_rng(5)
        samples = [rng.normal(size=(2, 3, 4, 4)) for _ in range(3)]
        stats = compute_stats(samples)
        for sample in samples:
            x = normalize(sample, stats)
            self.assertTrue(np.all((x >= 0) & (x <= 1)))
            np.testing.assert_allclose(denormalize(x, stats), sample, atol=1e-12)
        lows = np.broadcast_to(np.array(stats.x_min)[:, None, None], (3, 4, 4))
        np.testing.assert_array_equal(normalize(lows, stats), np.zeros((3, 4, 4)))

    def test_empty_dataset(self):
        with self.assertRaises(DataError):
            compute_stats([])

    def test_validation_values_may_leave_unit_interval(self):
        stats = NormStats(x_min=(0.0,), x_max=(1.0,))
        self.assertEqual(normalize(np.full((1, 1, 1), 2.0), stats)[0, 0, 0], 2.0)

    def test_records_are_accepted(self):
        record = SampleRecord(x_raw=np.arange(8.0).reshape(1, 2, 2, 2), r=np.zeros((1, 1, 1)), y_reg=0.0)
        stats = compute_stats([record])
        self.assertEqual(stats.x_min, (0.0, 4.0))
        self.assertEqual(stats.x_max, (3.0, 7.0))


class ClassWeightTests(SimpleTestCase):
    """Testes dos pesos por frequência de classe"""

    def test_single_bin_weight_is_zero(self):
        weights = class_weights([2, 2, 2], n=4)
        self.assertEqual(weights.w[2], 0.0)

    def test_two_equal_bins(self):
        weights = class_weights([0, 1, 0, 1], n=2)
        np.testing.assert_allclose(weights.w, [np.log(2), np.log(2)], atol=1e-12)

    def test_ninety_ten_split(self):
        weights = class_weights([0] * 90 + [1] * 10, n=2)
        np.testing.assert_allclose(weights.w, [0.1054, 2.3026], atol=1e-4)
        self.assertEqual(weights.total, 100)
        np.testing.assert_array_equal(weights.histogram, [90, 10])

    def test_empty_bins_get_max_occupied_weight(self):
        weights = class_weights([0] * 9 + [1], n=4)
        self.assertEqual(weights.w[2], weights.w[1])
        self.assertEqual(weights.w[3], weights.w[1])
        self.assertEqual(weights.empty_bins, [2, 3])

    def test_rarer_bins_never_lighter(self):
        labels = np.random.default_rng(6).geometric(0.3, size=500) - 1
        labels = labels[labels < 10]
        weights = class_weights(labels, n=10)
        counts = weights.histogram
        for i in range(10):
            for j in range(10):
                if 0 < counts[i] < counts[j]:
                    self.assertGreaterEqual(weights.w[i], weights.w[j])

    def test_mean_normalize(self):
        weights = class_weights([0] * 90 + [1] * 10, n=2, mean_normalize=True)
        self.assertAlmostEqual(weights.w.mean(), 1.0, places=12)

    def test_errors(self):
        with self.assertRaises(DataError):
            class_weights([], n=3)
        with self.assertRaises(ContractError):
            class_weights([3], n=3)


class RelabelTests(SimpleTestCase):
    """Testes da reclassificação de registros"""

    def test_labels_follow_new_spec(self):
        records = [SampleRecord(x_raw=np.zeros((1, 1, 1, 1)), r=np.zeros((1, 1, 1)), y_reg=y) for y in (0.0, 1.0, 3.0)]
        labeled = relabel(records, BinSpec(y_min=0.0, y_max=3.0, n=4))
        self.assertEqual([record.label for record in labeled], [0, 1, 3])
        self.assertIsNone(records[0].label)
