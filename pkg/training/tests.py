import tempfile
from collections import OrderedDict
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from binning.targets import BinSpec, to_bin
from core.exceptions import ConfigError, ContractError, DataError, TrainingDivergedError
from core.utils import FileUtils, slow_test
from numerics.tensor import Tape, backward
from synthdata.generator import GeneratorConfig
from synthdata.sampling import build_dataset
from training.config import TrainConfig
from training.loop import Trainer, _check_input_shape, evaluate, train
from training.optim import OptimizerState, adam_step, clip_gradients, global_norm
from training.runs import BEST_LINK, TRAIN_LOG, VAL_LOG, RunDirectory
from transformer.checkpoint import read_checkpoint, write_checkpoint
from transformer.config import AttentionMode, ModelConfig
from transformer.params import Params


def tiny_dataset(**changes):
    values = dict(regions=2, region_size=24, frames_per_region=24, val_fraction=0.5, blob_rate=3.0,
                  train_samples=32, val_samples=12, label_bins=8, channels=3, input_frames=2,
                  target_frames=4, crop_size=8, seed=3)
    values.update(changes)
    return build_dataset(GeneratorConfig(**values))


def tiny_model(**changes):
    values = dict(patch_size=4, hidden_dim=16, heads=2, depth=1, n_bins=8)
    values.update(changes)
    return ModelConfig.toy(**values)


class TrainConfigTests(SimpleTestCase):
    """Validação da configuração de treino"""

    def test_challenge_preset(self):
        config = TrainConfig.challenge()
        self.assertEqual((config.learning_rate, config.batch_size, config.max_steps), (1e-5, 128, 25000))

    def test_invalid_values(self):
        for changes in ({'learning_rate': 0.0}, {'beta1': 1.0}, {'batch_size': 0}, {'attention_mode': 'x'},
                        {'grad_clip': -1.0}):
            with self.subTest(changes=changes), self.assertRaises(ConfigError):
                TrainConfig(**changes)


class AdamTests(SimpleTestCase):
    """Testes do otimizador"""

    def test_zero_gradient_keeps_parameters(self):
        params = Params.initialize(ModelConfig.toy(), np.random.default_rng(0))
        before = params.arrays()
        state = OptimizerState.create(params)
        zeros = OrderedDict((name, np.zeros(tensor.shape)) for name, tensor in params.items())
        for _ in range(3):
            adam_step(params, zeros, state, TrainConfig())
        for name, array in before.items():
            np.testing.assert_array_equal(params[name].data, array)
        self.assertEqual(state.step, 3)

    def test_three_step_hand_trace(self):
        config = tiny_model()
        params = Params.initialize(config, np.random.default_rng(1))
        name = 'head_b'
        start = params[name].data[0]
        train_config = TrainConfig(learning_rate=0.1)
        state = OptimizerState.create(params)
        gs = [0.5, -0.2, 0.1]
        m = v = 0.0
        expected = start
        for t, g in enumerate(gs, start=1):
            grads = OrderedDict((key, np.zeros(tensor.shape)) for key, tensor in params.items())
            grads[name][0] = g
            adam_step(params, grads, state, train_config)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            expected -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            self.assertAlmostEqual(params[name].data[0], expected, places=12)

    def test_shape_mismatch(self):
        params = Params.initialize(tiny_model(), np.random.default_rng(2))
        state = OptimizerState.create(params)
        grads = OrderedDict((name, np.zeros(tensor.shape)) for name, tensor in params.items())
        grads['head_b'] = np.zeros(3)
        with self.assertRaises(ContractError):
            adam_step(params, grads, state, TrainConfig())
        with self.assertRaises(ContractError):
            adam_step(params, {}, state, TrainConfig())

    def test_clip_scales_to_max_norm(self):
        grads = OrderedDict(a=np.array([3.0]), b=np.array([4.0]))
        clipped, norm = clip_gradients(grads, 1.0)
        self.assertEqual(norm, 5.0)
        self.assertAlmostEqual(global_norm(clipped), 1.0)


class TrainerPropertyTests(SimpleTestCase):
    """Propriedades de um passo de treino"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = tiny_dataset()

    def test_single_step_reduces_batch_loss(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                trainer = Trainer(TrainConfig(learning_rate=1e-4, batch_size=8, seed=seed), tiny_model(), self.dataset)
                x, labels = trainer.sample_batch()
                trainer.params.zero_grad()
                with Tape() as tape:
                    loss = trainer.batch_loss(x, labels)
                backward(loss, tape)
                grads = OrderedDict((name, tensor.grad.copy()) for name, tensor in trainer.params.items())
                adam_step(trainer.params, grads, trainer.state, trainer.config)
                self.assertLess(trainer.batch_loss(x, labels).item(), loss.item())

    def test_every_parameter_receives_gradient(self):
        for mode in AttentionMode.values:
            trainer = Trainer(TrainConfig(batch_size=4, seed=1, attention_mode=mode), tiny_model(), self.dataset)
            touched = set()
            for _ in range(5):
                x, labels = trainer.sample_batch()
                trainer.params.zero_grad()
                with Tape() as tape:
                    loss = trainer.batch_loss(x, labels)
                backward(loss, tape)
                touched |= {name for name, tensor in trainer.params.items() if np.any(tensor.grad != 0)}
            self.assertEqual(touched, set(trainer.params))

    def test_same_seed_gives_identical_losses(self):
        config = TrainConfig(batch_size=4, max_steps=10, val_interval=10, seed=5)
        first = [loss for _, loss in train(config, tiny_model(), self.dataset).train]
        second = [loss for _, loss in train(config, tiny_model(), self.dataset).train]
        self.assertEqual(len(first), 10)
        self.assertEqual(first, second)

    def test_region_first_sampling_uses_every_region(self):
        trainer = Trainer(TrainConfig(batch_size=64), tiny_model(), self.dataset)
        self.assertEqual(trainer.regions, [0, 1])

    def test_batches_draw_fresh_pairs_from_the_world(self):
        trainer = Trainer(TrainConfig(batch_size=16, seed=2), tiny_model(), self.dataset)
        stored = {record.origin for record in self.dataset.train}
        records = trainer.sample_records() + trainer.sample_records()
        self.assertTrue(any(record.origin not in stored for record in records))
        for record in records:
            self.assertLessEqual(record.origin[1] + self.dataset.config.window, self.dataset.config.split_frame)
            self.assertEqual(record.label, to_bin(record.y_reg, trainer.bin_spec))

    def test_stored_dataset_samples_its_own_records(self):
        dataset = replace(self.dataset, world=None)
        trainer = Trainer(TrainConfig(batch_size=16, seed=2), tiny_model(), dataset)
        stored = {record.origin for record in dataset.train}
        self.assertTrue(all(record.origin in stored for record in trainer.sample_records()))

    def test_input_shape_mismatch(self):
        # recortes de 8x8 contra um modelo configurado para 16x16
        with self.assertRaises(ConfigError):
            _check_input_shape(tiny_model(), self.dataset.train)

    def test_missing_validation_split(self):
        dataset = tiny_dataset(val_samples=0)
        with self.assertRaises(DataError):
            Trainer(TrainConfig(), tiny_model(), dataset)

    def test_divergence_raises_with_diagnostics(self):
        with tempfile.TemporaryDirectory() as tmp:
            trainer = Trainer(TrainConfig(batch_size=2, max_steps=3), tiny_model(), self.dataset, run_dir=tmp)
            trainer.params['head_w'].data[0, 0] = np.nan
            with self.assertRaises(TrainingDivergedError) as ctx:
                trainer.fit()
            self.assertTrue((Path(tmp) / 'divergence.json').is_file())
        self.assertEqual(ctx.exception.diagnostics['step'], 1)
        self.assertIn('learning_rate', ctx.exception.diagnostics)


class RunDirectoryTests(SimpleTestCase):
    """Artefatos gravados por uma execução"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = tiny_dataset()

    def test_zero_steps_persists_initial_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            run = train(TrainConfig(max_steps=0), tiny_model(), self.dataset, run_dir=tmp)
            self.assertEqual(run.train, [])
            self.assertEqual(run.validations, [])
            best = Path(tmp) / BEST_LINK
            self.assertTrue(best.is_symlink())
            _, meta = read_checkpoint(best)
            self.assertEqual(meta['step'], 0)

    def test_logs_and_best_pointer(self):
        config = TrainConfig(batch_size=4, max_steps=7, val_interval=3, learning_rate=1e-2, seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            run = train(config, tiny_model(), self.dataset, run_dir=tmp)
            train_rows = FileUtils.read_csv(Path(tmp) / TRAIN_LOG)
            val_rows = FileUtils.read_csv(Path(tmp) / VAL_LOG)
            _, meta = read_checkpoint(Path(tmp) / BEST_LINK)
            histogram = RunDirectory(tmp).read_histogram()
        self.assertEqual(len(train_rows), 7)
        self.assertEqual([int(row['step']) for row in val_rows], [3, 6, 7])
        losses = [v.val_loss for v in run.validations]
        self.assertEqual(run.best_val_loss, min(losses))
        self.assertEqual(meta['step'], run.best_step)
        self.assertEqual(run.validations[losses.index(min(losses))].step, run.best_step)
        self.assertEqual(sum(int(row['count']) for row in histogram), len(self.dataset.train))

    def test_checkpoint_evaluation_reproduces_report(self):
        config = TrainConfig(batch_size=4, max_steps=4, val_interval=2, seed=4)
        with tempfile.TemporaryDirectory() as tmp:
            run = train(config, tiny_model(), self.dataset, run_dir=tmp)
            first = evaluate(Path(tmp) / BEST_LINK, self.dataset.val, batch_size=config.eval_batch_size)
            second = evaluate(Path(tmp) / BEST_LINK, self.dataset.val, batch_size=config.eval_batch_size)
        self.assertEqual(first, second)
        self.assertEqual(first, run.best_report)

    def test_bin_spec_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            train(TrainConfig(max_steps=0), tiny_model(), self.dataset, run_dir=tmp)
            with self.assertRaises(ConfigError):
                evaluate(Path(tmp) / BEST_LINK, self.dataset.val, bin_spec=BinSpec(0.0, 1.0, 8))

    def test_lenient_bin_spec_mismatch_warns_and_relabels(self):
        with tempfile.TemporaryDirectory() as tmp:
            train(TrainConfig(max_steps=0), tiny_model(), self.dataset, run_dir=tmp)
            expected = evaluate(Path(tmp) / BEST_LINK, self.dataset.val)
            with self.assertLogs('training.loop', level='WARNING') as logs:
                report = evaluate(Path(tmp) / BEST_LINK, self.dataset.val, bin_spec=BinSpec(0.0, 1.0, 8),
                                  strict_bins=False)
        self.assertEqual(report, expected)
        self.assertIn('diferem das do checkpoint', logs.output[0])

    def test_uniform_model_crps_matches_closed_form(self):
        trainer = Trainer(TrainConfig(), tiny_model(), self.dataset)
        trainer.params['head_w'].data[:] = 0.0
        trainer.params['head_b'].data[:] = 0.0
        with tempfile.TemporaryDirectory() as tmp:
            write_checkpoint(tmp, trainer.params, trainer.checkpoint_meta(0, None))
            dry = [record for record in trainer.val_records if record.label == 0] or trainer.val_records[:1]
            report = evaluate(tmp, dry)
        n = 8
        label = dry[0].label
        expected = sum(((i + 1) / n - (1.0 if i >= label else 0.0)) ** 2 for i in range(n))
        if label == 0:
            self.assertAlmostEqual(expected, sum((k / n) ** 2 for k in range(n)), places=12)
        self.assertAlmostEqual(report.per_class[0].mean_crps, expected, places=12)


class OverfitTests(SimpleTestCase):
    """Testes empíricos longos"""

    @slow_test
    def test_memorizes_sixty_four_samples(self):
        dataset = tiny_dataset(train_samples=64, val_samples=16, region_size=48, frames_per_region=48,
                               crop_size=16, label_bins=16, blob_rate=4.0)
        dataset.val = dataset.train
        dataset.world = None
        model = ModelConfig.toy(hidden_dim=64, heads=4, depth=2, n_bins=16)
        config = TrainConfig(learning_rate=1e-3, batch_size=16, max_steps=2000, val_interval=500, seed=0)
        run = train(config, model, dataset)
        self.assertLess(np.mean([loss for _, loss in run.train[-20:]]), 0.05)
        self.assertEqual(run.final_report.bw_top3, 1.0)
