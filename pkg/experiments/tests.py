import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.exceptions import ConfigError, TrainingDivergedError
from core.utils import FileUtils, slow_test
from synthdata.generator import GeneratorConfig
from synthdata.sampling import build_dataset
from synthdata.storage import TRAIN_FILE, VAL_FILE, read_dataset_dir
from training.config import TrainConfig
from transformer.config import ModelConfig
from .ablations import (ATTENTION_HEADER, BINS_HEADER, DIRECTION_FILE, DIRECTION_HEADER, LOSS_HEADER, TIMINGS_FILE,
                        TIMINGS_HEADER, Variant, attention_direction, run_variants)
from .reporting import CURVES_HEADER, HISTOGRAM_HEADER
from .schemas import default_experiment, load_experiment, parse_experiment, validate_document

TINY = {
    'generator': {
        'regions': 2, 'region_size': 24, 'frames_per_region': 24, 'val_fraction': 0.5, 'blob_rate': 3.0,
        'train_samples': 16, 'val_samples': 8, 'label_bins': 8, 'channels': 3, 'input_frames': 2,
        'target_frames': 4, 'crop_size': 8, 'seed': 3,
    },
    'model': {'patch_size': 4, 'hidden_dim': 16, 'heads': 2, 'depth': 1, 'n_bins': 8},
    'training': {'batch_size': 4, 'max_steps': 3, 'val_interval': 2},
}


def write_config(directory, data=None, **sections) -> str:
    document = json.loads(json.dumps(TINY if data is None else data))
    for name, values in sections.items():
        document.setdefault(name, {}).update(values)
    path = Path(directory) / 'experiment.json'
    path.write_text(json.dumps(document), encoding='utf-8')
    return str(path)


def run_command(name, *args, **options) -> str:
    out = StringIO()
    call_command(name, *args, stdout=out, **options)
    return out.getvalue()


def csv_lines(output: str, header) -> list[str]:
    """Linhas da tabela impressa, a partir do cabeçalho e sem a mensagem final"""
    lines = output.splitlines()
    start = lines.index(','.join(header))
    return [line for line in lines[start + 1:] if ',' in line and ' ' not in line]


class SchemaTests(SimpleTestCase):
    """Validação dos arquivos de experimento"""

    def test_unknown_key_is_rejected(self):
        for document in ({'training': {'learnig_rate': 1e-3}}, {'extra': {}}, {'model': {'depht': 2}}):
            with self.subTest(document=document), self.assertRaises(ConfigError):
                validate_document(document)

    def test_wrong_types_are_rejected(self):
        for document in ({'generator': {'regions': 'sete'}}, {'model': {'attention_mode': 'diagonal'}},
                         {'training': {'batch_size': 0}}, {'generator': {'val_fraction': 1.0}}):
            with self.subTest(document=document), self.assertRaises(ConfigError):
                parse_experiment(document)

    def test_sections_override_defaults(self):
        experiment = parse_experiment({'training': {'learning_rate': 1e-3, 'attention_mode': None},
                                       'model': {'attention_mode': 't-s'}})
        self.assertEqual(experiment.training.learning_rate, 1e-3)
        self.assertIsNone(experiment.training.attention_mode)
        self.assertEqual(experiment.model.attention_mode, 't-s')
        self.assertEqual(experiment.model.hidden_dim, ModelConfig.desk().hidden_dim)
        self.assertEqual(experiment.generator, GeneratorConfig())

    def test_challenge_preset(self):
        experiment = default_experiment(challenge=True)
        self.assertEqual(experiment.model, ModelConfig.challenge())
        self.assertEqual(experiment.training, TrainConfig.challenge())
        self.assertEqual(experiment.model.seq_len, 257)

    def test_cross_field_errors_become_config_errors(self):
        with self.assertRaises(ConfigError):
            parse_experiment({'model': {'hidden_dim': 30, 'heads': 4}})

    def test_overrides(self):
        experiment = default_experiment().with_overrides(attention='s-t', bins=16, loss_weighting=False, seed=9)
        training = experiment.training
        self.assertEqual((training.attention_mode, training.n_bins, training.loss_weighting, training.seed),
                         ('s-t', 16, False, 9))
        base = default_experiment()
        self.assertIs(base.with_overrides(), base)

    def test_missing_or_invalid_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                load_experiment(Path(tmp) / 'nada.json')
            broken = Path(tmp) / 'broken.json'
            broken.write_text('{"training": ', encoding='utf-8')
            with self.assertRaises(ConfigError):
                load_experiment(broken)
            self.assertEqual(load_experiment(write_config(tmp)).generator.regions, 2)


class GenDataCommandTests(SimpleTestCase):
    """Comando gen_data"""

    def test_writes_dataset_that_reads_back(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / 'data'
            output = run_command('gen_data', config=write_config(tmp), out=str(out))
            stored = read_dataset_dir(out)
        expected = build_dataset(GeneratorConfig(**TINY['generator']))
        self.assertEqual(len(stored.train), 16)
        for left, right in zip(stored.train + stored.val, expected.train + expected.val):
            np.testing.assert_array_equal(left.x_raw, right.x_raw)
            self.assertEqual(left.label, right.label)
        rows = csv_lines(output, ('bin', 'count'))
        self.assertEqual(sum(int(row.split(',')[1]) for row in rows), 16)

    def test_dry_world_puts_everything_in_bin_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = run_command('gen_data', config=write_config(tmp, generator={'blob_rate': 0.0}),
                                 out=str(Path(tmp) / 'data'))
        counts = [int(row.split(',')[1]) for row in csv_lines(output, ('bin', 'count'))]
        self.assertEqual(counts[0], 16)
        self.assertEqual(sum(counts[1:]), 0)

    def test_fixed_seed_gives_identical_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp)
            run_command('gen_data', config=config, out=str(Path(tmp) / 'a'))
            run_command('gen_data', config=config, out=str(Path(tmp) / 'b'))
            for name in (TRAIN_FILE, VAL_FILE, 'split_manifest.json', 'label_histogram.csv'):
                self.assertEqual((Path(tmp) / 'a' / name).read_bytes(), (Path(tmp) / 'b' / name).read_bytes())

    def test_invalid_config_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, generator={'regionz': 3})
            with self.assertRaises(CommandError) as ctx:
                run_command('gen_data', config=config, out=str(Path(tmp) / 'data'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_impossible_split_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, generator={'frames_per_region': 8})
            with self.assertRaises(CommandError) as ctx:
                run_command('gen_data', config=config, out=str(Path(tmp) / 'data'))
        self.assertEqual(ctx.exception.returncode, 2)


class TrainEvalReportCommandTests(SimpleTestCase):
    """Comandos train, eval e report"""

    def test_train_then_eval_and_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp)
            data = Path(tmp) / 'data'
            run_command('gen_data', config=config, out=str(data))
            first, second = Path(tmp) / 'run_a', Path(tmp) / 'run_b'
            run_command('train', config=config, data=str(data), out=str(first))
            run_command('train', config=config, data=str(data), out=str(second), seed=1, attention='s-t')
            self.assertTrue((first / 'best').is_symlink())

            output = run_command('eval', str(first / 'best'), config=config, data=str(data), out=str(Path(tmp) / 'ev'))
            self.assertIn(','.join(('kind', 'bin', 'count')), output)
            self.assertTrue((Path(tmp) / 'ev' / 'report.csv').is_file())

            run_command('report', str(first), out=str(Path(tmp) / 'single'))
            single = FileUtils.read_csv(Path(tmp) / 'single' / 'curves.csv')
            run_command('report', str(first), str(second), out=str(Path(tmp) / 'both'))
            curves = FileUtils.read_csv(Path(tmp) / 'both' / 'curves.csv')
            histogram = FileUtils.read_csv(Path(tmp) / 'both' / 'label_histogram.csv')
            header = (Path(tmp) / 'both' / 'curves.csv').read_text(encoding='utf-8').splitlines()[0]

        self.assertEqual(header, ','.join(CURVES_HEADER))
        self.assertEqual(len(single), 3)
        self.assertEqual({row['run'] for row in curves}, {'run_a', 'run_b'})
        self.assertEqual(len(curves), 6)
        self.assertEqual(list(histogram[0]), list(HISTOGRAM_HEADER))
        for run in ('run_a', 'run_b'):
            self.assertEqual(sum(int(row['count']) for row in histogram if row['run'] == run), 16)
        validated = [row for row in single if row['val_loss']]
        self.assertEqual([row['step'] for row in validated], ['2', '3'])

    def test_report_names_directory_without_runlog(self):
        with tempfile.TemporaryDirectory() as tmp:
            empty = Path(tmp) / 'vazio'
            empty.mkdir()
            with self.assertRaises(CommandError) as ctx:
                run_command('report', str(empty), out=str(Path(tmp) / 'out'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('vazio', str(ctx.exception))

    def test_missing_checkpoint_exits_with_usage_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                run_command('eval', str(Path(tmp) / 'nada'), config=write_config(tmp))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_divergence_exits_with_failure_code(self):
        error = TrainingDivergedError("Treinamento divergiu no passo 1", {'step': 1, 'learning_rate': 1.0})
        with tempfile.TemporaryDirectory() as tmp, \
                mock.patch('experiments.management.commands.train.train', side_effect=error):
            with self.assertRaises(CommandError) as ctx:
                run_command('train', config=write_config(tmp), out=str(Path(tmp) / 'run'))
        self.assertEqual(ctx.exception.returncode, 1)


class AblationCommandTests(SimpleTestCase):
    """Tabelas das ablações"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.config = write_config(cls.tmp.name, training={'max_steps': 2, 'val_interval': 1})
        cls.data = str(Path(cls.tmp.name) / 'data')
        run_command('gen_data', config=cls.config, out=cls.data)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def _out(self, name) -> Path:
        return Path(self.tmp.name) / name

    def test_loss_table_layout(self):
        out = self._out('loss')
        output = run_command('ablate_loss', config=self.config, data=self.data, out=str(out), seeds='0,1')
        rows = FileUtils.read_csv(out / 'ablate_loss.csv')
        self.assertEqual(len(rows), 2 * 2 + 2)
        self.assertEqual([row['weighting'] for row in rows],
                         ['weighted', 'weighted', 'unweighted', 'unweighted', 'weighted', 'unweighted'])
        self.assertEqual([row['seed'] for row in rows[-2:]], ['mean', 'mean'])
        self.assertEqual(len(csv_lines(output, LOSS_HEADER)), 6)
        mean = np.mean([float(row['bw_crps']) for row in rows[:2]])
        self.assertAlmostEqual(float(rows[4]['bw_crps']), mean, places=12)

    def test_loss_table_is_deterministic(self):
        first, second = self._out('det_a'), self._out('det_b')
        run_command('ablate_loss', config=self.config, data=self.data, out=str(first), seeds='3')
        run_command('ablate_loss', config=self.config, data=self.data, out=str(second), seeds='3')
        self.assertEqual((first / 'ablate_loss.csv').read_bytes(), (second / 'ablate_loss.csv').read_bytes())

    def test_attention_table_layout(self):
        out = self._out('attention')
        run_command('ablate_attention', config=self.config, data=self.data, out=str(out), seeds='0')
        rows = FileUtils.read_csv(out / 'ablate_attention.csv')
        timings = FileUtils.read_csv(out / TIMINGS_FILE)
        header = (out / 'ablate_attention.csv').read_text(encoding='utf-8').splitlines()[0]
        self.assertEqual(header, ','.join(ATTENTION_HEADER))
        self.assertEqual(len(rows), 3 + 3)
        self.assertEqual([row['mode'] for row in rows[:3]], ['full', 's-t', 't-s'])
        self.assertEqual(list(timings[0]), list(TIMINGS_HEADER))
        self.assertEqual(len(timings), 3)
        direction = FileUtils.read_csv(out / DIRECTION_FILE)
        self.assertEqual(len(direction), 1)
        self.assertEqual(list(direction[0]), list(DIRECTION_HEADER))
        means = {row['mode']: float(row['bw_crps']) for row in rows[3:]}
        self.assertEqual(direction[0]['best_mode'], min(means, key=means.get))
        self.assertEqual(direction[0]['full_is_best'], str(means['full'] <= min(means['s-t'], means['t-s'])))

    def test_attention_direction_flags_a_losing_full_mode(self):
        rows = [('full', 'mean', 0.5, 0.30), ('s-t', 'mean', 0.5, 0.20), ('t-s', 'mean', 0.5, 0.25)]
        self.assertEqual(attention_direction(rows), ('s-t', 0.30, 0.20, False))
        rows[0] = ('full', 'mean', 0.5, 0.20)
        self.assertEqual(attention_direction(rows), ('full', 0.20, 0.20, True))

    def test_bins_table_has_one_row_per_count(self):
        out = self._out('bins')
        run_command('ablate_bins', config=self.config, data=self.data, out=str(out), seeds='0', bin_counts='4,8,16')
        rows = FileUtils.read_csv(out / 'ablate_bins.csv')
        self.assertEqual(list(rows[0]), list(BINS_HEADER))
        self.assertEqual([int(row['n_bins']) for row in rows], [4, 8, 16])
        self.assertTrue(all(float(row['crps']) >= 0 for row in rows))

    def test_invalid_seed_list(self):
        for seeds in ('', 'a,b'):
            with self.subTest(seeds=seeds), self.assertRaises(CommandError) as ctx:
                run_command('ablate_loss', config=self.config, data=self.data, out=str(self._out('x')), seeds=seeds)
            self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_bin_counts(self):
        with self.assertRaises(CommandError) as ctx:
            run_command('ablate_bins', config=self.config, data=self.data, out=str(self._out('y')), bin_counts='1,8')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_variants_keep_submission_order(self):
        dataset = read_dataset_dir(self.data)
        model = ModelConfig.toy(hidden_dim=16, n_bins=8, depth=1)
        variants = [Variant(str(seed), seed, TrainConfig(batch_size=2, max_steps=1, seed=seed), model)
                    for seed in (2, 0, 1)]
        results = run_variants(variants, dataset, workers=1)
        self.assertEqual([result.label for result in results], ['2', '0', '1'])


class AblationDirectionTests(SimpleTestCase):
    """Direções das ablações na bancada sintética (testes longos)"""

    BENCH = {
        'generator': {'regions': 4, 'region_size': 48, 'frames_per_region': 64, 'train_samples': 384,
                      'val_samples': 128, 'label_bins': 16, 'channels': 3, 'input_frames': 2,
                      'target_frames': 8, 'crop_size': 16, 'blob_rate': 1.5},
        'model': {'patch_size': 4, 'hidden_dim': 32, 'heads': 2, 'depth': 2, 'n_bins': 16},
        'training': {'learning_rate': 0.001, 'batch_size': 16, 'max_steps': 600, 'val_interval': 100},
    }

    def _bench(self, tmp) -> tuple[str, str]:
        config = write_config(tmp, data=self.BENCH)
        data = str(Path(tmp) / 'data')
        run_command('gen_data', config=config, out=data)
        return config, data

    @slow_test
    def test_class_weighting_improves_bin_weighted_scores(self):
        with tempfile.TemporaryDirectory() as tmp:
            config, data = self._bench(tmp)
            run_command('ablate_loss', config=config, data=data, out=str(Path(tmp) / 'loss'), seeds='0,1,2')
            rows = FileUtils.read_csv(Path(tmp) / 'loss' / 'ablate_loss.csv')
        per_seed = {(row['weighting'], row['seed']): row for row in rows}
        for seed in ('0', '1', '2'):
            self.assertGreater(float(per_seed[('weighted', seed)]['bw_top3']),
                               float(per_seed[('unweighted', seed)]['bw_top3']))
        self.assertLess(float(per_seed[('weighted', 'mean')]['bw_crps']),
                        float(per_seed[('unweighted', 'mean')]['bw_crps']))

    @slow_test
    def test_coarsest_bins_give_worst_crps(self):
        with tempfile.TemporaryDirectory() as tmp:
            config, data = self._bench(tmp)
            run_command('ablate_bins', config=config, data=data, out=str(Path(tmp) / 'bins'), seeds='0',
                        bin_counts='4,8,16,64')
            rows = FileUtils.read_csv(Path(tmp) / 'bins' / 'ablate_bins.csv')
        self.assertEqual([int(row['n_bins']) for row in rows], [4, 8, 16, 64])
        crps = [float(row['crps']) for row in rows]
        self.assertEqual(crps.index(max(crps)), 0)

    @slow_test
    def test_attention_direction_is_recorded_with_the_table(self):
        with tempfile.TemporaryDirectory() as tmp:
            config, data = self._bench(tmp)
            out = Path(tmp) / 'attention'
            with self.assertLogs('experiments.ablations', level='INFO') as logs:
                run_command('ablate_attention', config=config, data=data, out=str(out), seeds='0,1,2')
            rows = FileUtils.read_csv(out / 'ablate_attention.csv')
            direction = FileUtils.read_csv(out / DIRECTION_FILE)[0]
        means = {row['mode']: float(row['bw_crps']) for row in rows if row['seed'] == 'mean'}
        full_is_best = means['full'] <= min(means['s-t'], means['t-s'])
        self.assertEqual(direction['full_is_best'], str(full_is_best))
        level = 'INFO' if full_is_best else 'WARNING'
        self.assertTrue(any(line.startswith(level) and 'Atenção completa' in line for line in logs.output))
