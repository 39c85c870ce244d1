from __future__ import absolute_import
import decimal
import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from saintkt.exceptions import (NumericalError, ShapeError, StateError,
                                ValidationError)
from saintkt.numerics import (RngStream, Tensor, add, check_gradient, clip,
                              dropout, elementwise, finite_difference_gradient,
                              index, layer_norm, log, masked_fill, matmul,
                              multiply, reduce_mean, reduce_sum, relu,
                              reshape, scale, sigmoid, softmax, subtract,
                              take, transpose, where, xavier_uniform)


def naive_matmul(a, b):
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            total = 0.0
            for k in range(inner):
                total += a[i, k] * b[k, j]
            out[i, j] = total
    return out


def away_from_zero(values, margin=0.1):
    """
    Push values away from the kinks of relu / clip so that central
    differences stay on one side.
    """
    return np.sign(values) * (margin + np.abs(values))


class MatmulTest(unittest.TestCase):
    def test_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 5))
        assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(x)).data, x)

    def test_annihilator(self):
        x = np.random.default_rng(1).standard_normal((3, 4))
        assert_array_equal(matmul(Tensor(np.zeros((2, 3))), Tensor(x)).data,
                           np.zeros((2, 4)))

    def test_matches_triple_loop(self):
        generator = np.random.default_rng(2)
        a = generator.standard_normal((3, 2))
        b = generator.standard_normal((2, 3))
        self.assertLess(np.max(np.abs(matmul(Tensor(a), Tensor(b)).data -
                                      naive_matmul(a, b))), 1e-12)

    def test_matches_triple_loop_up_to_32(self):
        generator = np.random.default_rng(3)
        for _ in range(5):
            m, k, n = generator.integers(1, 33, size=3)
            a = generator.standard_normal((m, k))
            b = generator.standard_normal((k, n))
            self.assertLess(
                np.max(np.abs(matmul(Tensor(a), Tensor(b)).data -
                              naive_matmul(a, b))), 1e-12)

    def test_shape_error_names_both_shapes(self):
        with self.assertRaises(ShapeError) as context:
            matmul(Tensor(np.zeros((3, 2))), Tensor(np.zeros((4, 5))))
        self.assertIn("(3, 2)", str(context.exception))
        self.assertIn("(4, 5)", str(context.exception))

    def test_backward_rule(self):
        generator = np.random.default_rng(4)
        a = Tensor(generator.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(generator.standard_normal((3, 4)), requires_grad=True)
        matmul(a, b).sum().backward()
        upstream = np.ones((2, 4))
        assert_allclose(a.grad, upstream.dot(b.data.T), atol=1e-12)
        assert_allclose(b.grad, a.data.T.dot(upstream), atol=1e-12)


class SoftmaxTest(unittest.TestCase):
    def test_symmetric(self):
        assert_array_equal(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_shift_invariance(self):
        for c in (-20.0, 0.0, 3.5, 700.0):
            assert_allclose(softmax(Tensor([c, c + math.log(3.0)])).data,
                            [0.25, 0.75], atol=1e-12)

    def test_high_precision_reference(self):
        with decimal.localcontext() as context:
            context.prec = 50
            exps = [decimal.Decimal(v).exp() for v in (1, 2, 3)]
            total = sum(exps)
            expected = [float(e / total) for e in exps]
        assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data, expected,
                        rtol=1e-14)

    def test_rows_sum_to_one_and_masked_entries_are_zero(self):
        generator = np.random.default_rng(5)
        scores = generator.standard_normal((4, 6, 6))
        mask = np.triu(np.ones((6, 6), dtype=bool), k=1)
        out = softmax(masked_fill(Tensor(scores), mask, -np.inf)).data
        assert_allclose(out.sum(axis=-1), np.ones((4, 6)), atol=1e-9)
        self.assertTrue(np.all(out[:, mask] == 0.0))
        self.assertTrue(np.all(out >= 0))

    def test_all_masked_row_is_zero(self):
        x = Tensor([[-np.inf, -np.inf], [1.0, 2.0]], requires_grad=True)
        out = softmax(x)
        assert_array_equal(out.data[0], [0.0, 0.0])
        multiply(out, Tensor([[1.0, 2.0], [3.0, 4.0]])).sum().backward()
        self.assertTrue(np.all(np.isfinite(x.grad)))
        assert_array_equal(x.grad[0], [0.0, 0.0])

    def test_invalid_axis(self):
        with self.assertRaises(ValidationError):
            softmax(Tensor([1.0, 2.0]), axis=1)

    def test_nan_input(self):
        with self.assertRaises(NumericalError):
            softmax(Tensor([1.0, np.nan]))


class LayerNormTest(unittest.TestCase):
    def test_constant_vector(self):
        out = layer_norm(Tensor([4.0, 4.0, 4.0]), Tensor(np.ones(3)),
                         Tensor(np.zeros(3)))
        assert_array_equal(out.data, np.zeros(3))

    def test_mean_and_variance(self):
        out = layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)),
                         Tensor(np.zeros(3))).data
        self.assertLess(abs(out.mean()), 1e-12)
        self.assertAlmostEqual(out.var(), 1.0, delta=1e-4)

    def test_zero_gamma_gives_beta(self):
        beta = np.array([0.5, -1.0, 2.0, 0.0])
        x = np.random.default_rng(6).standard_normal((3, 4))
        out = layer_norm(Tensor(x), Tensor(np.zeros(4)), Tensor(beta)).data
        assert_array_equal(out, np.tile(beta, (3, 1)))

    def test_parameter_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(4)),
                       Tensor(np.zeros(4)))


class ElementwiseTest(unittest.TestCase):
    def test_sigmoid_of_zero(self):
        self.assertEqual(elementwise("sigmoid", Tensor(0.0)).item(), 0.5)

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = sigmoid(Tensor([-800.0, 800.0])).data
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertEqual(out[1], 1.0)

    def test_relu(self):
        assert_array_equal(elementwise("relu", Tensor([-5.0, 5.0])).data,
                           [0.0, 5.0])

    def test_add_and_scale(self):
        x = Tensor([1.0, 2.0])
        assert_array_equal(elementwise("add", x, Tensor([3.0, 4.0])).data,
                           [4.0, 6.0])
        assert_array_equal(elementwise("scale", x, 3.0).data, [3.0, 6.0])

    def test_dropout_eval_is_identity(self):
        x = np.random.default_rng(7).standard_normal((5, 5))
        out = elementwise("dropout", Tensor(x), 0.1, rng=RngStream(1),
                          train=False)
        assert_array_equal(out.data, x)

    def test_dropout_train_zeroes_and_scales(self):
        x = np.ones(100000)
        out = dropout(Tensor(x), 0.25, RngStream(8), train=True).data
        kept = out != 0
        assert_allclose(out[kept], 1.0 / 0.75)
        self.assertAlmostEqual(1.0 - kept.mean(), 0.25, delta=0.01)

    def test_dropout_is_reproducible(self):
        x = Tensor(np.ones((10, 10)))
        first = dropout(x, 0.5, RngStream(9), train=True).data
        second = dropout(x, 0.5, RngStream(9), train=True).data
        assert_array_equal(first, second)

    def test_dropout_invalid_rate(self):
        with self.assertRaises(ValidationError):
            dropout(Tensor([1.0]), 1.0, RngStream(0), train=True)
        with self.assertRaises(ValidationError):
            dropout(Tensor([1.0]), -0.1)

    def test_dropout_training_needs_stream(self):
        with self.assertRaises(StateError):
            dropout(Tensor([1.0]), 0.1, None, train=True)

    def test_unknown_operation(self):
        with self.assertRaises(ValidationError):
            elementwise("tanh", Tensor([1.0]))


class TensorTest(unittest.TestCase):
    def test_integer_data_is_cast(self):
        self.assertEqual(Tensor([1, 2]).dtype, np.float64)

    def test_item_requires_single_element(self):
        self.assertEqual(Tensor([[3.0]]).item(), 3.0)
        with self.assertRaises(ShapeError):
            Tensor([1.0, 2.0]).item()

    def test_non_finite_results_are_errors(self):
        with self.assertRaises(NumericalError):
            add(Tensor([1.0]), Tensor([np.inf]))
        with self.assertRaises(NumericalError):
            log(Tensor([0.0, 1.0]))

    def test_take_rejects_out_of_range(self):
        table = Tensor(np.zeros((3, 2)))
        with self.assertRaises(ValidationError):
            take(table, np.array([3]))
        with self.assertRaises(ValidationError):
            take(table, np.array([0.5]))

    def test_operators(self):
        a = Tensor([2.0, 4.0])
        assert_array_equal((a + 1.0).data, [3.0, 5.0])
        assert_array_equal((1.0 - a).data, [-1.0, -3.0])
        assert_array_equal((a * a).data, [4.0, 16.0])
        assert_array_equal((a / 2.0).data, [1.0, 2.0])
        assert_array_equal((-a).data, [-2.0, -4.0])
        assert_array_equal(a[1:].data, [4.0])


class BackwardTest(unittest.TestCase):
    def test_inner_product(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        matmul(x.reshape(1, 2), x.reshape(2, 1)).backward()
        assert_allclose(x.grad, [2.0, 4.0])

    def test_sum_of_sigmoid_matches_finite_differences(self):
        generator = np.random.default_rng(10)
        w = Tensor(generator.standard_normal((3, 4)), requires_grad=True,
                   name="w")
        x = Tensor(generator.standard_normal((4, 1)), requires_grad=True,
                   name="x")

        def function():
            return sigmoid(matmul(w, x)).sum()
        self.assertLess(check_gradient(function, [w, x]), 1e-6)

    def test_constant_graph_gives_zero_gradient(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        scale(x, 0.0).sum().backward()
        assert_array_equal(x.grad, np.zeros(3))

    def test_non_scalar_seed(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ShapeError):
            scale(x, 2.0).backward()

    def test_second_backward_needs_reset(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        out = (x * x).sum()
        out.backward()
        with self.assertRaises(StateError):
            out.backward()
        out.zero_grad()
        out.backward()
        assert_allclose(x.grad, [4.0, 8.0])

    def test_finite_difference_gradient_restores_values(self):
        x = Tensor([0.5, -1.5], requires_grad=True)
        estimate = finite_difference_gradient(lambda: (x * x).sum(), x)
        assert_allclose(estimate, [1.0, -3.0], atol=1e-8)
        assert_array_equal(x.data, [0.5, -1.5])


class GradientCheckTest(unittest.TestCase):
    """
    Every differentiable operation against central differences on random
    shapes and seeds.
    """

    TRIALS = 20

    def check(self, build, tensors, tolerance=1e-4):
        error = check_gradient(build, tensors)
        self.assertLess(error, tolerance)

    def trials(self):
        for seed in range(self.TRIALS):
            generator = np.random.default_rng(1000 + seed)
            rows, cols = generator.integers(1, 5, size=2)
            yield generator, int(rows), int(cols)

    @staticmethod
    def leaf(values, name=None):
        return Tensor(values, requires_grad=True, name=name)

    def test_broadcast_arithmetic(self):
        for generator, rows, cols in self.trials():
            a = self.leaf(generator.standard_normal((rows, cols)))
            b = self.leaf(generator.standard_normal((cols,)))
            weights = generator.standard_normal((rows, cols))
            self.check(lambda: multiply(
                subtract(multiply(add(a, b), b), scale(a, 0.3)),
                Tensor(weights)).sum(), [a, b])

    def test_batched_matmul_and_transpose(self):
        for generator, rows, cols in self.trials():
            a = self.leaf(generator.standard_normal((2, rows, cols)))
            b = self.leaf(generator.standard_normal((cols, 3)))
            weights = generator.standard_normal((2, 3, rows))
            self.check(lambda: multiply(
                transpose(matmul(a, b), (0, 2, 1)), Tensor(weights)).sum(),
                       [a, b])

    def test_reshape_index_and_take(self):
        for generator, rows, cols in self.trials():
            x = self.leaf(generator.standard_normal((rows, cols)))
            table = self.leaf(generator.standard_normal((4, 3)))
            indices = generator.integers(0, 4, size=(rows, 2))
            weights = generator.standard_normal((rows, 2, 3))

            def build():
                gathered = multiply(take(table, indices), Tensor(weights))
                picked = index(reshape(x, (rows * cols,)), slice(0, 1))
                return add(gathered.sum(), picked.sum())
            self.check(build, [x, table])

    def test_reductions(self):
        for generator, rows, cols in self.trials():
            x = self.leaf(generator.standard_normal((rows, cols, 2)))
            weights = generator.standard_normal((rows, 2))
            self.check(lambda: add(
                multiply(reduce_mean(x, axis=1), Tensor(weights)).sum(),
                reduce_sum(x, axis=(0, 2)).sum()), [x])

    def test_relu_sigmoid_log_clip(self):
        for generator, rows, cols in self.trials():
            x = self.leaf(away_from_zero(
                generator.standard_normal((rows, cols))))
            positive = self.leaf(0.5 + generator.random((rows, cols)))
            weights = generator.standard_normal((rows, cols))

            def build():
                value = add(add(relu(x), sigmoid(x)), log(positive))
                value = add(value, clip(x, -0.05, 0.05))
                return multiply(value, Tensor(weights)).sum()
            self.check(build, [x, positive])

    def test_masked_softmax(self):
        for generator, rows, cols in self.trials():
            width = cols + 1
            x = self.leaf(generator.standard_normal((rows, width)))
            mask = np.zeros((rows, width), dtype=bool)
            mask[:, -1] = True
            weights = generator.standard_normal((rows, width))
            self.check(lambda: multiply(
                softmax(masked_fill(x, mask, -np.inf)),
                Tensor(weights)).sum(), [x])

    def test_layer_norm(self):
        for generator, rows, cols in self.trials():
            width = cols + 1
            x = self.leaf(generator.standard_normal((rows, width)))
            gamma = self.leaf(generator.standard_normal(width))
            beta = self.leaf(generator.standard_normal(width))
            weights = generator.standard_normal((rows, width))
            self.check(lambda: multiply(layer_norm(x, gamma, beta),
                                        Tensor(weights)).sum(),
                       [x, gamma, beta])

    def test_where_and_dropout(self):
        for generator, rows, cols in self.trials():
            a = self.leaf(generator.standard_normal((rows, cols)))
            b = self.leaf(generator.standard_normal((cols,)))
            condition = generator.random((rows, cols)) < 0.5
            weights = generator.standard_normal((rows, cols))

            def build():
                mixed = where(condition, a, b)
                # A fresh stream per call keeps the mask fixed
                dropped = dropout(mixed, 0.3, RngStream(11), train=True)
                return multiply(dropped, Tensor(weights)).sum()
            self.check(build, [a, b])

    def test_sampled_entries(self):
        generator = np.random.default_rng(12)
        w = self.leaf(generator.standard_normal((20, 20)), "w")
        error = check_gradient(lambda: sigmoid(w).sum(), [w], max_entries=15,
                               rng=RngStream(12))
        self.assertLess(error, 1e-6)


class XavierTest(unittest.TestCase):
    def test_support_bound(self):
        w = xavier_uniform(30, 70, RngStream(0))
        self.assertTrue(np.all(np.abs(w.data) <= math.sqrt(6.0 / 100.0)))
        self.assertTrue(w.requires_grad)

    def test_square_three_bound_is_one(self):
        w = xavier_uniform(3, 3, RngStream(1))
        self.assertTrue(np.all(np.abs(w.data) <= 1.0))

    def test_mean_of_many_draws(self):
        w = xavier_uniform(1000, 1000, RngStream(2))
        self.assertLess(abs(float(np.mean(w.data))), 0.01)

    def test_rejects_empty_fans(self):
        with self.assertRaises(ValidationError):
            xavier_uniform(0, 3, RngStream(0))


class RngStreamTest(unittest.TestCase):
    def test_same_seed_same_draws(self):
        assert_array_equal(RngStream(5).generator.random(10),
                           RngStream(5).generator.random(10))

    def test_child_ignores_parent_draws(self):
        parent = RngStream(5)
        before = parent.child("init", 2).generator.random(4)
        parent.generator.random(100)
        after = parent.child("init", 2).generator.random(4)
        assert_array_equal(before, after)

    def test_children_differ(self):
        parent = RngStream(5)
        self.assertFalse(np.array_equal(
            parent.child("a").generator.random(4),
            parent.child("b").generator.random(4)))
        self.assertEqual(parent.algorithm, "PCG64")
