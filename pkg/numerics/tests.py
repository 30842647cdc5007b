import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from core.exceptions import ContractError, DimensionError, NumericError
from numerics import ops
from numerics.gradcheck import max_gradient_error
from numerics.tensor import Tape, Tensor, backward, set_check_finite

FINITE = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


def projected(fn, projection):
    """Perda escalar sum(fn() * R) usada nas verificações de gradiente"""
    return lambda: ops.sum(ops.mul(fn(), projection))


class MatmulTests(SimpleTestCase):
    """Testes do produto matricial"""

    def test_identity(self):
        out = ops.matmul(Tensor(np.eye(2)), Tensor([[3, 1], [2, 4]]))
        np.testing.assert_array_equal(out.data, [[3, 1], [2, 4]])

    def test_zero(self):
        out = ops.matmul(Tensor([[1, 2]]), Tensor([[0], [0]]))
        np.testing.assert_array_equal(out.data, [[0]])

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(DimensionError) as ctx:
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        self.assertIn('(2, 3)', str(ctx.exception))
        self.assertEqual(str(ctx.exception).count('(2, 3)'), 2)

    def test_gradient_random_3x4_4x2(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        r = rng.normal(size=(3, 2))
        error = max_gradient_error(projected(lambda: ops.matmul(a, b), r), [a, b])
        self.assertLessEqual(error, 1e-6)

    def test_batched_gradient_broadcasts_weight(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        r = rng.normal(size=(2, 3, 5))
        error = max_gradient_error(projected(lambda: ops.matmul(a, b), r), [a, b])
        self.assertLessEqual(error, 1e-6)


class LayerNormTests(SimpleTestCase):
    """Testes da LayerNorm"""

    def _unit(self, d):
        return Tensor(np.ones(d), requires_grad=True), Tensor(np.zeros(d), requires_grad=True)

    def test_constant_vector_maps_to_zero(self):
        gain, bias = self._unit(4)
        out = ops.layer_norm(Tensor([3.0, 3.0, 3.0, 3.0]), gain, bias)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_already_normalized(self):
        gain, bias = self._unit(2)
        out = ops.layer_norm(Tensor([1.0, -1.0]), gain, bias, eps=1e-14)
        np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-12)

    def test_dimension_mismatch(self):
        gain, bias = self._unit(3)
        with self.assertRaises(DimensionError):
            ops.layer_norm(Tensor(np.ones((2, 4))), gain, bias)

    def test_gradient_random_vector(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=5), requires_grad=True)
        gain = Tensor(rng.normal(size=5), requires_grad=True)
        bias = Tensor(rng.normal(size=5), requires_grad=True)
        r = rng.normal(size=5)
        error = max_gradient_error(projected(lambda: ops.layer_norm(x, gain, bias), r), [x, gain, bias])
        self.assertLessEqual(error, 1e-5)

    @hyp_settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 6), elements=FINITE))
    def test_output_statistics(self, values):
        # vetores quase constantes caem no piso do eps
        if np.any(values.std(axis=-1) < 0.5):
            return
        gain, bias = self._unit(6)
        out = ops.layer_norm(Tensor(values), gain, bias).data
        self.assertTrue(np.all(np.abs(out.mean(axis=-1)) <= 1e-10))
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-3)


class SoftmaxTests(SimpleTestCase):
    """Testes do softmax"""

    def test_symmetric(self):
        np.testing.assert_array_equal(ops.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_stability_with_large_logits(self):
        out = ops.softmax(Tensor([1000.0, 0.0])).data
        self.assertAlmostEqual(out[0], 1.0)
        self.assertLess(out[1], 1e-12)

    def test_gradient_random_vector(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=6), requires_grad=True)
        r = rng.normal(size=6)
        error = max_gradient_error(projected(lambda: ops.softmax(x), r), [x])
        self.assertLessEqual(error, 1e-5)

    def test_mask_zeroes_disallowed_positions(self):
        mask = np.array([True, False, True])
        out = ops.softmax(Tensor([1.0, 5.0, 1.0]), mask=mask).data
        np.testing.assert_allclose(out, [0.5, 0.0, 0.5], atol=1e-15)

    def test_fully_masked_row_is_rejected(self):
        with self.assertRaises(ContractError):
            ops.softmax(Tensor([1.0, 2.0]), mask=np.array([False, False]))

    @hyp_settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, (4, 7), elements=st.floats(-700, 700)))
    def test_rows_sum_to_one(self, values):
        out = ops.softmax(Tensor(values)).data
        self.assertTrue(np.all(out >= 0))
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


class GeluTests(SimpleTestCase):
    """Testes da ativação GELU"""

    def test_zero(self):
        self.assertEqual(ops.gelu(Tensor([0.0])).data[0], 0.0)

    def test_large_positive_asymptote(self):
        self.assertAlmostEqual(ops.gelu(Tensor([20.0])).data[0], 20.0, places=10)

    def test_tanh_form(self):
        for value in (-1.5, 0.3, 1.0):
            expected = 0.5 * value * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (value + 0.044715 * value ** 3)))
            self.assertAlmostEqual(ops.gelu(Tensor([value])).data[0], expected, places=12)

    def test_gradient_at_point(self):
        x = Tensor([0.7], requires_grad=True)
        error = max_gradient_error(lambda: ops.sum(ops.gelu(x)), [x])
        self.assertLessEqual(error, 1e-5)


class BackwardTests(SimpleTestCase):
    """Testes da propagação reversa"""

    def test_sum_gives_ones(self):
        w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(w)
        backward(loss, tape)
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_scaled_sum_gives_twos(self):
        w = Tensor(np.arange(4.0), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.mul(w, 2.0))
        backward(loss, tape)
        np.testing.assert_array_equal(w.grad, np.full(4, 2.0))

    def test_non_scalar_loss_is_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            out = ops.mul(w, 2.0)
        with self.assertRaises(ContractError):
            backward(out, tape)

    def test_unreachable_tensor_keeps_zero_grad(self):
        w = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(w)
            ops.sum(unused)
        backward(loss, tape)
        np.testing.assert_array_equal(unused.grad, np.zeros(3))

    def test_double_backward_accumulates_without_zeroing(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.mul(w, w))
        backward(loss, tape)
        backward(loss, tape)
        np.testing.assert_array_equal(w.grad, [4.0, 8.0])
        w.zero_grad()
        backward(loss, tape)
        np.testing.assert_array_equal(w.grad, [2.0, 4.0])

    def test_no_tape_means_no_graph(self):
        w = Tensor(np.ones(2), requires_grad=True)
        out = ops.mul(w, 3.0)
        self.assertFalse(out.requires_grad)

    def test_nan_is_an_error(self):
        with self.assertRaises(NumericError):
            ops.log(Tensor([0.0]))

    def test_finite_check_can_be_disabled(self):
        set_check_finite(False)
        try:
            out = ops.log(Tensor([0.0]))
            self.assertTrue(np.isneginf(out.data[0]))
        finally:
            set_check_finite(True)


class RandomizedGradientTests(SimpleTestCase):
    """Verificação por diferenças finitas em formas e sementes aleatórias"""

    def _shapes(self, seed):
        rng = np.random.default_rng(seed)
        return rng, tuple(int(v) for v in rng.integers(1, 5, size=int(rng.integers(1, 3)))) + (int(rng.integers(2, 6)),)

    def test_every_op_over_ten_seeds(self):
        for seed in range(10):
            rng, shape = self._shapes(seed)
            d = shape[-1]
            x = Tensor(rng.normal(size=shape), requires_grad=True)
            y = Tensor(rng.normal(size=shape), requires_grad=True)
            gain = Tensor(rng.normal(size=d), requires_grad=True)
            bias = Tensor(rng.normal(size=d), requires_grad=True)
            w = Tensor(rng.normal(size=(d, 3)), requires_grad=True)
            positive = Tensor(rng.uniform(0.5, 2.0, size=shape), requires_grad=True)
            r = rng.normal(size=shape)
            r3 = rng.normal(size=shape[:-1] + (3,))
            cases = [
                (lambda: ops.add(x, y), [x, y], r),
                (lambda: ops.mul(x, y), [x, y], r),
                (lambda: ops.softmax(x), [x], r),
                (lambda: ops.gelu(x), [x], r),
                (lambda: ops.layer_norm(x, gain, bias), [x, gain, bias], r),
                (lambda: ops.log(positive), [positive], r),
                (lambda: ops.matmul(ops.reshape(x, (-1, d)), w), [x, w], r3.reshape(-1, 3)),
            ]
            for fn, tensors, projection in cases:
                with self.subTest(seed=seed, shape=shape):
                    error = max_gradient_error(projected(fn, projection), tensors)
                    self.assertLessEqual(error, 1e-4)

    def test_shape_ops(self):
        rng = np.random.default_rng(11)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 1, 4)), requires_grad=True)
        cases = [
            (lambda: ops.transpose(a, (2, 0, 1)), [a], rng.normal(size=(4, 2, 3))),
            (lambda: ops.concat([a, b], axis=1), [a, b], rng.normal(size=(2, 4, 4))),
            (lambda: ops.select(a, 0, axis=1), [a], rng.normal(size=(2, 4))),
            (lambda: ops.gather(ops.reshape(a, (6, 4)), [0, 3, 1, 2, 2, 0]), [a], rng.normal(size=6)),
            (lambda: ops.mean(a, axis=1), [a], rng.normal(size=(2, 4))),
        ]
        for fn, tensors, projection in cases:
            error = max_gradient_error(projected(fn, projection), tensors)
            self.assertLessEqual(error, 1e-4)

    def test_forward_and_backward_are_deterministic(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(7)
            x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
            w = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
            with Tape() as tape:
                loss = ops.sum(ops.softmax(ops.gelu(ops.matmul(x, w))))
            backward(loss, tape)
            results.append((loss.data.copy(), x.grad.copy(), w.grad.copy()))
        for first, second in zip(results[0], results[1]):
            np.testing.assert_array_equal(first, second)
