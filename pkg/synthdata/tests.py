import pickle
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.ndimage import gaussian_filter

from binning.targets import derive_target, to_bin
from core.exceptions import ConfigError, DataError, FormatError
from core.utils import FileUtils, slow_test
from synthdata.generator import GeneratorConfig, generate_world
from synthdata.sampling import SplitManifest, build_dataset, quantize, sample_pair
from synthdata.storage import (
    HEADER, HISTOGRAM_FILE, TRAIN_FILE, read_dataset, read_dataset_dir, write_dataset, write_dataset_dir,
)


def small_config(**changes):
    values = dict(regions=3, region_size=40, frames_per_region=40, val_fraction=0.5, blob_rate=2.0,
                  train_samples=40, val_samples=10, label_bins=8, channels=3, input_frames=2,
                  target_frames=4, crop_size=16, seed=7)
    values.update(changes)
    return GeneratorConfig(**values)


class GeneratorConfigTests(SimpleTestCase):
    """Validação da configuração do gerador"""

    def test_defaults_are_valid(self):
        config = GeneratorConfig()
        self.assertEqual(config.window, 20)
        self.assertEqual(config.split_frame, 72)

    def test_partitions_must_fit_a_window(self):
        with self.assertRaises(ConfigError):
            GeneratorConfig(val_fraction=0.1)

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            small_config(blob_rate=-1.0)
        with self.assertRaises(ConfigError):
            small_config(intensity_tail=0.0)
        with self.assertRaises(ConfigError):
            small_config(crop_size=64)


class WorldTests(SimpleTestCase):
    """Testes do mundo sintético"""

    def test_same_seed_is_bit_identical(self):
        a, b = generate_world(small_config()), generate_world(small_config())
        for region in range(3):
            np.testing.assert_array_equal(a.rain[region], b.rain[region])
            np.testing.assert_array_equal(a.radiance(region, 0, 5), b.radiance(region, 0, 5))

    def test_different_seed_changes_rain(self):
        a, b = generate_world(small_config(seed=1)), generate_world(small_config(seed=2))
        self.assertFalse(all(np.array_equal(x, y) for x, y in zip(a.rain, b.rain)))

    def test_zero_blob_rate_means_dry_world(self):
        world = generate_world(small_config(blob_rate=0.0))
        for rain in world.rain:
            self.assertFalse(np.any(rain))

    def test_rain_non_negative_and_radiance_finite(self):
        world = generate_world(small_config())
        for region in range(3):
            self.assertTrue(np.all(world.rain[region] >= 0))
            self.assertTrue(np.all(np.isfinite(world.radiance_sequence(region))))

    def test_channels_are_transforms_of_rain(self):
        world = generate_world(small_config(noise=0.0))
        t = 10
        frame = world.radiance_frame(1, t)
        for channel, transform in enumerate(world.transforms):
            expected = transform.offset + transform.gain * gaussian_filter(
                world.rain[1][t - transform.lag], sigma=transform.sigma, mode='nearest')
            np.testing.assert_allclose(frame[channel], expected, atol=1e-12)
        self.assertEqual([transform.lag for transform in world.transforms], [0, 1, 2])

    def test_cached_frames_are_read_only(self):
        frame = generate_world(small_config()).radiance_frame(0, 0)
        with self.assertRaises(ValueError):
            frame[0, 0, 0] = 1.0


class SamplingTests(SimpleTestCase):
    """Testes da amostragem de pares"""

    def setUp(self):
        self.config = small_config()
        self.world = generate_world(self.config)

    def test_deterministic_rng_gives_deterministic_record(self):
        a = sample_pair(self.world, np.random.default_rng(3))
        b = sample_pair(self.world, np.random.default_rng(3))
        self.assertEqual(a.origin, b.origin)
        np.testing.assert_array_equal(a.x_raw, b.x_raw)
        np.testing.assert_array_equal(a.r, b.r)

    def test_input_and_target_share_the_crop(self):
        record = sample_pair(self.world, np.random.default_rng(4))
        region, t0, row, col = record.origin
        crop = (slice(row, row + 16), slice(col, col + 16))
        self.assertEqual(record.x_raw.shape, (2, 3, 16, 16))
        self.assertEqual(record.r.shape, (4, 16, 16))
        np.testing.assert_array_equal(record.x_raw, quantize(self.world.radiance(region, t0, t0 + 2)[(Ellipsis,) + crop]))
        np.testing.assert_array_equal(record.r, quantize(self.world.rain[region][(slice(t0 + 2, t0 + 6),) + crop]))

    def test_label_matches_recomputation(self):
        dataset = build_dataset(self.config, self.world)
        for record in dataset.train + dataset.val:
            self.assertEqual(record.label, to_bin(derive_target(record.r), dataset.bin_spec))

    def test_window_exhaustion_is_data_error(self):
        with self.assertRaises(DataError):
            sample_pair(self.world, np.random.default_rng(0), time_range=(0, 5))

    def test_range_of_exactly_one_window_always_fits(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            record = sample_pair(self.world, rng, time_range=(10, 16))
            self.assertEqual(record.origin[1], 10)

    def test_partitions_of_exactly_one_window_build(self):
        config = GeneratorConfig(regions=2, region_size=32, frames_per_region=40, val_fraction=0.5,
                                 train_samples=128, val_samples=32, label_bins=8, channels=3, crop_size=16)
        self.assertEqual((config.split_frame, config.window), (20, 20))
        dataset = build_dataset(config)
        self.assertEqual(len(dataset.train), 128)
        self.assertEqual({t0 for _, t0, _, _ in dataset.manifest.train}, {0})
        self.assertEqual({t0 for _, t0, _, _ in dataset.manifest.val}, {20})

    def test_world_survives_pickling(self):
        clone = pickle.loads(pickle.dumps(self.world))
        np.testing.assert_array_equal(clone.radiance_frame(1, 3), self.world.radiance_frame(1, 3))

    def test_splits_are_temporally_disjoint(self):
        dataset = build_dataset(self.config, self.world)
        self.assertTrue(dataset.manifest.is_temporally_disjoint())
        train_frames = {(r, t) for r, t0, _, _ in dataset.manifest.train for t in range(t0, t0 + 6)}
        val_frames = {(r, t) for r, t0, _, _ in dataset.manifest.val for t in range(t0, t0 + 6)}
        self.assertFalse(train_frames & val_frames)

    def test_manifest_round_trip(self):
        manifest = build_dataset(self.config, self.world).manifest
        self.assertEqual(SplitManifest.from_dict(manifest.to_dict()), manifest)

    def test_dry_world_puts_everything_in_bin_zero(self):
        dataset = build_dataset(small_config(blob_rate=0.0))
        self.assertEqual({record.y_reg for record in dataset.train}, {0.0})
        self.assertEqual({record.label for record in dataset.train + dataset.val}, {0})

    def test_mapping_is_learnable_by_linear_baseline(self):
        dataset = build_dataset(small_config(train_samples=200))
        features = np.array([np.append(record.x_raw.mean(axis=(0, 2, 3)), 1.0) for record in dataset.train])
        targets = np.array([record.y_reg for record in dataset.train])
        coef, *_ = np.linalg.lstsq(features, targets, rcond=None)
        linear_mse = np.mean((features @ coef - targets) ** 2)
        constant_mse = np.mean((targets - targets.mean()) ** 2)
        self.assertLess(linear_mse, constant_mse)

    def test_label_histogram_is_long_tailed(self):
        dataset = build_dataset(GeneratorConfig(train_samples=2000, val_samples=0))
        histogram = dataset.histogram()
        self.assertGreater(histogram[0], histogram[32:].sum())

    @slow_test
    def test_label_histogram_tail_at_ten_thousand_samples(self):
        dataset = build_dataset(GeneratorConfig(train_samples=10000, val_samples=0))
        histogram = dataset.histogram()
        self.assertGreaterEqual(histogram[0], 50 * histogram[32:].sum())


class StorageTests(SimpleTestCase):
    """Testes do formato .satd"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = build_dataset(small_config(train_samples=100))

    def _write(self, tmp):
        return write_dataset(self.dataset.train, Path(tmp) / TRAIN_FILE)

    def test_round_trip_is_lossless(self):
        with tempfile.TemporaryDirectory() as tmp:
            loaded = read_dataset(self._write(tmp))
        self.assertEqual(len(loaded), 100)
        for original, copy in zip(self.dataset.train, loaded):
            np.testing.assert_array_equal(original.x_raw, copy.x_raw)
            np.testing.assert_array_equal(original.r, copy.r)
            self.assertEqual(original.y_reg, copy.y_reg)
            self.assertEqual(original.label, copy.label)
            self.assertEqual(original.origin, copy.origin)

    def test_truncated_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self._write(tmp)
            path.write_bytes(path.read_bytes()[:-10])
            with self.assertRaises(FormatError) as ctx:
                read_dataset(path)
        self.assertIsNotNone(ctx.exception.offset)

    def test_count_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self._write(tmp)
            blob = bytearray(path.read_bytes())
            fields = list(HEADER.unpack_from(blob, 0))
            for delta in (1, -1):
                changed = list(fields)
                changed[3] += delta
                blob[:HEADER.size] = HEADER.pack(*changed)
                path.write_bytes(bytes(blob))
                with self.assertRaises(FormatError):
                    read_dataset(path)

    def test_bad_magic(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self._write(tmp)
            path.write_bytes(b'XXXX' + path.read_bytes()[4:])
            with self.assertRaises(FormatError) as ctx:
                read_dataset(path)
        self.assertEqual(ctx.exception.offset, 0)

    def test_dataset_directory_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_dataset_dir(self.dataset, tmp)
            loaded = read_dataset_dir(tmp)
            rows = FileUtils.read_csv(Path(tmp) / HISTOGRAM_FILE)
        self.assertEqual(loaded.bin_spec, self.dataset.bin_spec)
        self.assertEqual(loaded.config, self.dataset.config)
        self.assertEqual(loaded.manifest, self.dataset.manifest)
        self.assertEqual(sum(int(row['count']) for row in rows), len(self.dataset.train))

    def test_same_seed_gives_identical_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = write_dataset(build_dataset(small_config()).train, Path(tmp) / 'a.satd').read_bytes()
            second = write_dataset(build_dataset(small_config()).train, Path(tmp) / 'b.satd').read_bytes()
        self.assertEqual(first, second)
