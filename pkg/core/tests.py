import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings
from hypothesis import given, strategies as st

from .exceptions import ConfigError, FormatError, NumericError, SatformerError, TrainingDivergedError
from .utils import FileUtils, SeedUtils, SettingsUtils


class ExceptionTests(SimpleTestCase):
    """Hierarquia de erros"""

    def test_hierarchy(self):
        self.assertTrue(issubclass(TrainingDivergedError, NumericError))
        self.assertTrue(issubclass(ConfigError, SatformerError))

    def test_format_error_carries_offset(self):
        error = FormatError("cabeçalho inválido", offset=12)
        self.assertEqual(error.offset, 12)
        self.assertIn('byte 12', str(error))
        self.assertIsNone(FormatError("sem posição").offset)

    def test_diverged_error_carries_diagnostics(self):
        self.assertEqual(TrainingDivergedError("x").diagnostics, {})
        self.assertEqual(TrainingDivergedError("x", {'step': 3}).diagnostics['step'], 3)


class SeedUtilsTests(SimpleTestCase):
    """Derivação de sementes"""

    def test_spawn_is_reproducible_and_independent(self):
        first = [rng.random(4) for rng in SeedUtils.spawn(11, 3)]
        second = [rng.random(4) for rng in SeedUtils.spawn(11, 3)]
        for left, right in zip(first, second):
            np.testing.assert_array_equal(left, right)
        self.assertFalse(np.array_equal(first[0], first[1]))

    def test_child_seed_depends_on_path(self):
        self.assertEqual(SeedUtils.child_seed(5, 1, 2), SeedUtils.child_seed(5, 1, 2))
        self.assertNotEqual(SeedUtils.child_seed(5, 1, 2), SeedUtils.child_seed(5, 2, 1))

    @given(st.lists(st.integers(min_value=0, max_value=10 ** 6), min_size=1, max_size=8))
    def test_parse_seeds(self, seeds):
        self.assertEqual(SeedUtils.parse_seeds(','.join(str(seed) for seed in seeds)), seeds)

    def test_parse_seeds_rejects_bad_input(self):
        for raw in ('', ' , ', '1,x'):
            with self.subTest(raw=raw), self.assertRaises(ConfigError):
                SeedUtils.parse_seeds(raw)


class FileUtilsTests(SimpleTestCase):
    """CSV e JSON com formato estável"""

    def test_csv_keeps_full_float_precision(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = FileUtils.write_csv(Path(tmp) / 'sub' / 't.csv', ('a', 'b'), [(0.1 + 0.2, np.int64(3))])
            rows = FileUtils.read_csv(path)
            text = path.read_text(encoding='utf-8')
        self.assertEqual(float(rows[0]['a']), 0.1 + 0.2)
        self.assertEqual(rows[0]['b'], '3')
        self.assertEqual(text, 'a,b\n0.30000000000000004,3\n')

    def test_json_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = FileUtils.write_json(Path(tmp) / 'x.json', {'b': [1, 2], 'a': 0.5})
            self.assertEqual(FileUtils.read_json(path), {'a': 0.5, 'b': [1, 2]})


class SettingsUtilsTests(SimpleTestCase):
    """Leitura do dicionário SATFORMER"""

    @override_settings(SATFORMER={'THREADS': 0, 'OUTPUT_DIR': '/tmp/satformer-runs'})
    def test_worker_count_has_floor_of_one(self):
        self.assertEqual(SettingsUtils.worker_count(), 1)
        self.assertEqual(SettingsUtils.output_dir(), Path('/tmp/satformer-runs'))

    @override_settings(SATFORMER={'THREADS': 4})
    def test_worker_count_from_settings(self):
        self.assertEqual(SettingsUtils.worker_count(), 4)

    def test_project_settings_define_only_what_is_read(self):
        from config import settings as project_settings
        self.assertEqual(set(project_settings.SATFORMER), {'THREADS', 'CHECK_FINITE', 'OUTPUT_DIR', 'SLOW_TESTS'})
        for name in ('SYSTEM_NAME', 'SYSTEM_VERSION'):
            self.assertFalse(hasattr(project_settings, name))
