import tempfile
from collections import OrderedDict

import numpy as np
from django.test import SimpleTestCase

from binning.weights import class_weights
from core.exceptions import ContractError, DimensionError, FormatError
from core.utils import slow_test
from metrics.losses import weighted_cce
from numerics.gradcheck import max_gradient_error
from numerics.tensor import Tensor
from transformer.checkpoint import MANIFEST_NAME, read_checkpoint, write_checkpoint
from transformer.config import AttentionMode, ModelConfig, ScoreScale
from transformer.layers import (
    attention, encoder_block, factorized_attention, forward, full_space_time_attention, spatial_mask, temporal_mask,
    tokenize,
)
from transformer.params import Params, expected_parameter_count, parameter_layout


def random_params(config, seed=0, std=None):
    rng = np.random.default_rng(seed)
    if std is not None:
        config = config.replace(init_std=std)
    params = Params.initialize(config, rng)
    # ganhos/viéses fora do valor inicial para exercitar todos os termos
    arrays = params.arrays()
    for name, array in arrays.items():
        if 'ln_' in name or name.endswith(('_b1', '_b2')) or name in ('cls_token', 'head_b'):
            arrays[name] = array + rng.normal(0.0, 0.1, size=array.shape)
    return Params.from_arrays(config, arrays)


def zero_params(config):
    arrays = OrderedDict((name, np.zeros(shape)) for name, (shape, _) in parameter_layout(config).items())
    return Params.from_arrays(config, arrays)


def oracle_layer_norm(row, gain, bias, eps):
    mu = sum(row) / len(row)
    var = sum((value - mu) ** 2 for value in row) / len(row)
    return [(value - mu) / np.sqrt(var + eps) * g + b for value, g, b in zip(row, gain, bias)]


def oracle_attention(tokens, unit, config, allowed):
    """Atenção por laços explícitos sobre tokens e cabeças"""
    seq, d = tokens.shape
    hd = config.head_dim
    normed = np.array([
        oracle_layer_norm(list(tokens[i]), unit.ln_gain.data, unit.ln_bias.data, config.layer_norm_eps)
        for i in range(seq)
    ])
    q = normed @ unit.w_q.data
    k = normed @ unit.w_k.data
    v = normed @ unit.w_v.data
    s = np.zeros((seq, d))
    for h in range(config.heads):
        cols = slice(h * hd, (h + 1) * hd)
        for i in range(seq):
            scores = []
            for j in range(seq):
                if allowed(i, j):
                    scores.append((j, float(np.dot(q[i, cols], k[j, cols])) * config.score_scale_factor))
            top = max(score for _, score in scores)
            weights = [(j, np.exp(score - top)) for j, score in scores]
            total = sum(weight for _, weight in weights)
            for j, weight in weights:
                s[i, cols] += weight / total * v[j, cols]
    return s @ unit.w_out.data


def positions(config):
    """(quadro, patch) de cada linha; CLS = (-1, -1)"""
    table = [(-1, -1)]
    for t in range(config.frames):
        for p in range(config.patches_per_frame):
            table.append((t, p))
    return table


class ModelConfigTests(SimpleTestCase):
    """Testes da configuração do modelo"""

    def test_challenge_shapes(self):
        config = ModelConfig.challenge()
        self.assertEqual(config.seq_len, 257)
        self.assertEqual(config.patch_features, 4 * 4 * 11)
        self.assertEqual(config.n_bins, 64)

    def test_parameter_count_matches_closed_form(self):
        for config in (ModelConfig.challenge(), ModelConfig.toy(),
                       ModelConfig.toy(attention_mode=AttentionMode.S_THEN_T),
                       ModelConfig.desk(attention_mode=AttentionMode.T_THEN_S)):
            total = sum(int(np.prod(shape)) for shape, _ in parameter_layout(config).values())
            self.assertEqual(total, expected_parameter_count(config))
        params = Params.initialize(ModelConfig.toy(), np.random.default_rng(0))
        self.assertEqual(params.count(), expected_parameter_count(ModelConfig.toy()))

    def test_invalid_values_raise_config_error(self):
        from core.exceptions import ConfigError
        with self.assertRaises(ConfigError):
            ModelConfig.toy(hidden_dim=30, heads=4)
        with self.assertRaises(ConfigError):
            ModelConfig.toy(height=18)
        with self.assertRaises(ConfigError):
            ModelConfig.toy(attention_mode='diagonal')

    def test_enum_values_normalized_to_str(self):
        config = ModelConfig.toy(attention_mode=AttentionMode.S_THEN_T)
        self.assertEqual(type(config.attention_mode), str)
        self.assertEqual(config.attention_mode, 's-t')

    def test_score_scale_switch(self):
        config = ModelConfig.toy()
        self.assertAlmostEqual(config.score_scale_factor, 32 ** -0.5)
        self.assertAlmostEqual(config.replace(score_scale=ScoreScale.HEAD_DIM).score_scale_factor, 16 ** -0.5)


class TokenizeTests(SimpleTestCase):
    """Testes da tokenização em patches"""

    def test_sequence_length_and_cls_row(self):
        config = ModelConfig.toy()
        params = zero_params(config)
        x = np.random.default_rng(0).normal(size=(2, 3, 16, 16))
        z = tokenize(x, params, config)
        self.assertEqual(z.shape, (config.seq_len, config.hidden_dim))

    def test_patch_order_frame_major_row_major_channel_major(self):
        config = ModelConfig.toy(hidden_dim=48, heads=2)
        arrays = OrderedDict((name, np.zeros(shape)) for name, (shape, _) in parameter_layout(config).items())
        arrays['patch_projection'] = np.eye(config.patch_features, 48)
        params = Params.from_arrays(config, arrays)
        x = np.arange(2 * 3 * 16 * 16, dtype=float).reshape(2, 3, 16, 16)
        z = tokenize(x, params, config).data
        # quadro 1, linha de patch 2, coluna de patch 3 -> índice 1 + 16 + 2*4 + 3
        row = z[1 + 16 + 11]
        expected = x[1, :, 8:12, 12:16].reshape(-1)
        np.testing.assert_array_equal(row, expected)

    def test_wrong_input_shape(self):
        config = ModelConfig.toy()
        with self.assertRaises(DimensionError):
            tokenize(np.zeros((2, 3, 16, 12)), zero_params(config), config)

    def test_zero_input_and_projection_leave_position_embeddings(self):
        config = ModelConfig.toy()
        arrays = random_params(config, seed=13).arrays()
        arrays['patch_projection'][:] = 0.0
        arrays['cls_token'][:] = 0.0
        params = Params.from_arrays(config, arrays)
        z = tokenize(np.zeros((2, 3, 16, 16)), params, config).data
        np.testing.assert_array_equal(z, arrays['pos_embed'])

    def test_single_frame_single_patch_gives_two_tokens(self):
        config = ModelConfig.toy(frames=1, height=4, width=4)
        params = random_params(config, seed=14)
        x = np.random.default_rng(14).normal(size=(1, 3, 4, 4))
        z = tokenize(x, params, config).data
        self.assertEqual(z.shape, (2, config.hidden_dim))
        np.testing.assert_allclose(z[0], params['cls_token'].data + params['pos_embed'].data[0], atol=1e-15)
        expected = x[0].reshape(-1) @ params['patch_projection'].data + params['pos_embed'].data[1]
        np.testing.assert_allclose(z[1], expected, atol=1e-12)

    def test_batched_matches_single(self):
        config = ModelConfig.toy()
        params = random_params(config, seed=4)
        x = np.random.default_rng(5).normal(size=(3, 2, 3, 16, 16))
        batched = tokenize(x, params, config).data
        for b in range(3):
            np.testing.assert_allclose(batched[b], tokenize(x[b], params, config).data, atol=1e-12)


class AttentionOracleTests(SimpleTestCase):
    """Equivalência da atenção com implementações densas por laços"""

    def test_full_attention_matches_dense_loops(self):
        for seed in range(20):
            config = ModelConfig.toy()
            params = random_params(config, seed=seed, std=0.3)
            tokens = np.random.default_rng(100 + seed).normal(size=(config.seq_len, config.hidden_dim))
            unit = params.block(0).attention[0]
            out = attention(Tensor(tokens), unit, config).data
            expected = oracle_attention(tokens, unit, config, lambda i, j: True)
            self.assertLessEqual(np.max(np.abs(out - expected)), 1e-10)

    def test_factorized_modes_match_masked_loops(self):
        spatial = lambda table: lambda i, j: i == 0 or j == 0 or table[i][0] == table[j][0]  # noqa: E731
        temporal = lambda table: lambda i, j: i == 0 or j == 0 or table[i][1] == table[j][1]  # noqa: E731
        for seed in range(20):
            mode = AttentionMode.S_THEN_T if seed % 2 == 0 else AttentionMode.T_THEN_S
            config = ModelConfig.toy(attention_mode=mode)
            table = positions(config)
            order = (spatial, temporal) if mode == AttentionMode.S_THEN_T else (temporal, spatial)
            params = random_params(config, seed=seed, std=0.3)
            block = params.block(1)
            tokens = np.random.default_rng(200 + seed).normal(size=(config.seq_len, config.hidden_dim))
            out = factorized_attention(Tensor(tokens), block, config, mode).data
            expected = tokens
            for unit, rule in zip(block.attention, order):
                expected = expected + oracle_attention(expected, unit, config, rule(table))
            self.assertLessEqual(np.max(np.abs(out - expected)), 1e-10)

    def test_attention_rows_are_distributions(self):
        config = ModelConfig.toy()
        params = random_params(config, seed=1, std=0.5)
        tokens = Tensor(np.random.default_rng(1).normal(size=(4, config.seq_len, config.hidden_dim)))
        for mask in (None, spatial_mask(config), temporal_mask(config)):
            _, workspace = attention(tokens, params.block(0).attention[0], config, mask=mask, return_workspace=True)
            self.assertTrue(np.all(workspace.a.data >= 0))
            np.testing.assert_allclose(workspace.a.data.sum(axis=-1), 1.0, atol=1e-10)

    def test_full_mode_rejected_by_factorized(self):
        config = ModelConfig.toy()
        params = zero_params(config)
        with self.assertRaises(ContractError):
            factorized_attention(Tensor(np.zeros((config.seq_len, 32))), params.block(0), config, AttentionMode.FULL_ST)

    def test_single_frame_spatial_step_equals_full_attention(self):
        config = ModelConfig.toy(frames=1, attention_mode=AttentionMode.S_THEN_T)
        self.assertTrue(spatial_mask(config).all())
        unit = random_params(config, seed=15, std=0.3).block(0).attention[0]
        tokens = Tensor(np.random.default_rng(15).normal(size=(config.seq_len, config.hidden_dim)))
        np.testing.assert_allclose(attention(tokens, unit, config, mask=spatial_mask(config)).data,
                                   attention(tokens, unit, config).data, atol=1e-12)

    def test_single_patch_temporal_step_equals_full_attention(self):
        config = ModelConfig.toy(height=4, width=4, attention_mode=AttentionMode.T_THEN_S)
        self.assertTrue(temporal_mask(config).all())
        unit = random_params(config, seed=16, std=0.3).block(0).attention[0]
        tokens = Tensor(np.random.default_rng(16).normal(size=(config.seq_len, config.hidden_dim)))
        np.testing.assert_allclose(attention(tokens, unit, config, mask=temporal_mask(config)).data,
                                   attention(tokens, unit, config).data, atol=1e-12)

    def test_identical_tokens_attend_uniformly(self):
        config = ModelConfig.toy()
        params = random_params(config, seed=17, std=0.3)
        block = params.block(0)
        unit = block.attention[0]
        row = np.random.default_rng(17).normal(size=config.hidden_dim)
        tokens = np.tile(row, (config.seq_len, 1))
        out, workspace = full_space_time_attention(Tensor(tokens), block, config, return_workspace=True)
        np.testing.assert_allclose(workspace.a.data, 1.0 / (config.frames * config.patches_per_frame + 1),
                                   atol=1e-15)
        normed = np.array(oracle_layer_norm(list(row), unit.ln_gain.data, unit.ln_bias.data, config.layer_norm_eps))
        value = normed @ unit.w_v.data
        np.testing.assert_allclose(workspace.s.data, np.tile(value, (config.seq_len, 1)), atol=1e-12)
        np.testing.assert_allclose(out.data, np.tile(value @ unit.w_out.data, (config.seq_len, 1)), atol=1e-12)


class AttentionPropertyTests(SimpleTestCase):
    """Propriedades estruturais dos blocos"""

    def test_permutation_equivariance_without_positions(self):
        config = ModelConfig.toy()
        params = random_params(config, seed=3, std=0.3)
        rng = np.random.default_rng(3)
        tokens = rng.normal(size=(config.seq_len, config.hidden_dim))
        order = np.concatenate([[0], 1 + rng.permutation(config.seq_len - 1)])
        block = params.block(0)
        out = encoder_block(Tensor(tokens), block, config).data
        permuted = encoder_block(Tensor(tokens[order]), block, config).data
        np.testing.assert_allclose(permuted, out[order], atol=1e-10)
        np.testing.assert_allclose(permuted[0], out[0], atol=1e-10)

    def test_spatial_step_ignores_other_frames(self):
        config = ModelConfig.toy(attention_mode=AttentionMode.S_THEN_T)
        params = random_params(config, seed=6, std=0.3)
        unit = params.block(0).attention[0]
        rng = np.random.default_rng(6)
        tokens = rng.normal(size=(config.seq_len, config.hidden_dim))
        changed = tokens.copy()
        frame1 = slice(1 + config.patches_per_frame, config.seq_len)
        changed[frame1] += rng.normal(size=changed[frame1].shape)
        mask = spatial_mask(config)
        a = attention(Tensor(tokens), unit, config, mask=mask).data
        b = attention(Tensor(changed), unit, config, mask=mask).data
        frame0 = slice(1, 1 + config.patches_per_frame)
        np.testing.assert_allclose(a[frame0], b[frame0], atol=1e-12)

    def test_temporal_step_ignores_other_patches(self):
        config = ModelConfig.toy(attention_mode=AttentionMode.T_THEN_S)
        params = random_params(config, seed=7, std=0.3)
        unit = params.block(0).attention[0]
        rng = np.random.default_rng(7)
        tokens = rng.normal(size=(config.seq_len, config.hidden_dim))
        changed = tokens.copy()
        # patch 0 de cada quadro permanece; demais patches mudam
        keep = [1 + t * config.patches_per_frame for t in range(config.frames)]
        others = [i for i in range(1, config.seq_len) if i not in keep]
        changed[others] += rng.normal(size=(len(others), config.hidden_dim))
        mask = temporal_mask(config)
        a = attention(Tensor(tokens), unit, config, mask=mask).data
        b = attention(Tensor(changed), unit, config, mask=mask).data
        np.testing.assert_allclose(a[keep], b[keep], atol=1e-12)

    def test_zero_weight_block_is_identity(self):
        for mode in AttentionMode.values:
            config = ModelConfig.toy(attention_mode=mode)
            tokens = np.random.default_rng(8).normal(size=(config.seq_len, config.hidden_dim))
            out = encoder_block(Tensor(tokens), zero_params(config).block(0), config).data
            np.testing.assert_array_equal(out, tokens)


class ForwardTests(SimpleTestCase):
    """Testes do forward completo"""

    def test_challenge_width_output_is_distribution(self):
        config = ModelConfig.challenge().replace(depth=1)
        params = Params.initialize(config, np.random.default_rng(0))
        x = np.random.default_rng(1).uniform(size=(4, 11, 32, 32))
        probs = forward(x, params, config).data
        self.assertEqual(probs.shape, (64,))
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-12)

    @slow_test
    def test_full_challenge_config_output_is_distribution(self):
        config = ModelConfig.challenge()
        params = Params.initialize(config, np.random.default_rng(0))
        self.assertEqual(params.count(), expected_parameter_count(config))
        probs = forward(np.random.default_rng(1).uniform(size=(4, 11, 32, 32)), params, config).data
        self.assertEqual(probs.shape, (64,))
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-12)

    def test_zero_head_gives_uniform_output(self):
        config = ModelConfig.toy()
        arrays = random_params(config, seed=2).arrays()
        arrays['head_w'][:] = 0.0
        arrays['head_b'][:] = 0.0
        params = Params.from_arrays(config, arrays)
        probs = forward(np.random.default_rng(2).normal(size=(2, 3, 16, 16)), params, config).data
        np.testing.assert_allclose(probs, np.full(8, 1 / 8), atol=1e-15)

    def test_single_pixel_changes_output(self):
        config = ModelConfig.toy()
        params = random_params(config, seed=9, std=0.2)
        x = np.random.default_rng(9).normal(size=(2, 3, 16, 16))
        base = forward(x, params, config).data
        for index in [(0, 0, 0, 0), (1, 2, 15, 15), (1, 1, 7, 3)]:
            moved = x.copy()
            moved[index] += 1e-2
            self.assertGreater(np.max(np.abs(forward(moved, params, config).data - base)), 1e-12)

    def test_batched_forward(self):
        config = ModelConfig.toy(attention_mode=AttentionMode.S_THEN_T)
        params = random_params(config, seed=10)
        x = np.random.default_rng(10).normal(size=(3, 2, 3, 16, 16))
        probs = forward(x, params, config).data
        self.assertEqual(probs.shape, (3, 8))
        np.testing.assert_allclose(probs[1], forward(x[1], params, config).data, atol=1e-12)

    def test_degenerate_single_frame_and_single_patch(self):
        one_frame = ModelConfig.toy(frames=1, attention_mode=AttentionMode.S_THEN_T)
        probs = forward(np.ones((1, 3, 16, 16)), random_params(one_frame), one_frame).data
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-12)
        one_patch = ModelConfig.toy(height=4, width=4, attention_mode=AttentionMode.T_THEN_S)
        self.assertEqual(one_patch.seq_len, 3)
        probs = forward(np.ones((2, 3, 4, 4)), random_params(one_patch), one_patch).data
        self.assertAlmostEqual(probs.sum(), 1.0, delta=1e-12)


class ModelGradientTests(SimpleTestCase):
    """Verificação por diferenças finitas do modelo completo"""

    MATRIX_SAMPLES = 12

    def _error(self, config, seed):
        params = random_params(config, seed=seed, std=0.3)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, config.frames, config.channels, config.height, config.width))
        labels = [int(label) for label in rng.integers(config.n_bins, size=2)]
        weights = class_weights([0] * 12 + [1] * 5 + [2] * 2 + labels, config.n_bins)
        self.assertGreater(np.ptp(weights.w), 0.0)

        def loss():
            return weighted_cce(forward(x, params, config), labels, weights)

        # vetores (ganhos, viéses, CLS) inteiros; matrizes por amostragem
        vectors = [tensor for tensor in params.values() if tensor.ndim == 1]
        matrices = [tensor for tensor in params.values() if tensor.ndim > 1]
        return max(
            max_gradient_error(loss, vectors, floor=1e-6),
            max_gradient_error(loss, matrices, samples_per_tensor=self.MATRIX_SAMPLES,
                               rng=np.random.default_rng(seed), floor=1e-6),
        )

    def test_full_attention_over_five_seeds(self):
        for seed in range(5):
            with self.subTest(seed=seed):
                self.assertLessEqual(self._error(ModelConfig.toy(hidden_dim=16), seed), 1e-3)

    def test_factorized_attention(self):
        for mode in (AttentionMode.S_THEN_T, AttentionMode.T_THEN_S):
            with self.subTest(mode=mode):
                self.assertLessEqual(self._error(ModelConfig.toy(hidden_dim=16, attention_mode=mode), 11), 1e-3)


class CheckpointTests(SimpleTestCase):
    """Persistência de parâmetros"""

    def test_round_trip_is_bit_exact(self):
        config = ModelConfig.toy(attention_mode=AttentionMode.T_THEN_S)
        params = random_params(config, seed=12)
        with tempfile.TemporaryDirectory() as tmp:
            write_checkpoint(tmp, params, meta={'step': 40, 'bins.y_min': 0.1, 'bins.y_max': 12.5})
            loaded, meta = read_checkpoint(tmp)
        self.assertEqual(loaded.config, config)
        self.assertEqual(meta['step'], 40)
        self.assertEqual(meta['bins.y_min'], 0.1)
        for name, tensor in params.items():
            np.testing.assert_array_equal(loaded[name].data, tensor.data)

    def test_bad_header(self):
        params = zero_params(ModelConfig.toy())
        with tempfile.TemporaryDirectory() as tmp:
            write_checkpoint(tmp, params)
            path = f'{tmp}/{MANIFEST_NAME}'
            with open(path, encoding='utf-8') as handle:
                text = handle.read()
            with open(path, 'w', encoding='utf-8') as handle:
                handle.write(text.replace('v1', 'v9', 1))
            with self.assertRaises(FormatError):
                read_checkpoint(tmp)

    def test_truncated_blob(self):
        params = zero_params(ModelConfig.toy())
        with tempfile.TemporaryDirectory() as tmp:
            write_checkpoint(tmp, params)
            blob = f'{tmp}/params.bin'
            with open(blob, 'rb') as handle:
                data = handle.read()
            with open(blob, 'wb') as handle:
                handle.write(data[:-8])
            with self.assertRaises(FormatError):
                read_checkpoint(tmp)
