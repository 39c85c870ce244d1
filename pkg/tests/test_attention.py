from __future__ import absolute_import
import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from saintkt.attention import (AttentionParams, FfnParams, ForwardContext,
                               LayerNormParams, MaskSpec, causal_mask, ffn,
                               masked_attention, scaled_scores, sublayer)
from saintkt.constants import MaskKind, SublayerKind
from saintkt.exceptions import ShapeError, ValidationError
from saintkt.numerics import RngStream, Tensor, check_gradient


def reference_attention(x_q, x_kv, params, blocked):
    """
    Straight-line multi-head attention over plain arrays.
    """
    heads = params.num_heads
    d = params.head_dim
    outputs = []
    for head in range(heads):
        columns = slice(head * d, (head + 1) * d)
        q = x_q.dot(params.w_query.data[:, columns])
        k = x_kv.dot(params.w_key.data[:, columns])
        v = x_kv.dot(params.w_value.data[:, columns])
        scores = q.dot(k.T) / math.sqrt(d)
        scores[blocked] = -np.inf
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        outputs.append(weights.dot(v))
    return np.concatenate(outputs, axis=1).dot(params.w_output.data)


def zero_ffn(d_model, d_ff):
    return FfnParams(Tensor(np.zeros((d_model, d_ff))), Tensor(np.zeros(d_ff)),
                     Tensor(np.zeros((d_ff, d_model))),
                     Tensor(np.zeros(d_model)))


class CausalMaskTest(unittest.TestCase):
    def test_single(self):
        assert_array_equal(causal_mask(1), [[False]])

    def test_two(self):
        assert_array_equal(causal_mask(2), [[False, True], [False, False]])

    def test_allowed_count(self):
        self.assertEqual(int(np.sum(~causal_mask(4))), 10)

    def test_invalid_size(self):
        with self.assertRaises(ValidationError):
            causal_mask(0)

    def test_spec_blocks_padding(self):
        blocked = MaskSpec(MaskKind.CAUSAL, [1, 0]).blocked(3, 3)
        self.assertEqual(blocked.shape, (2, 1, 3, 3))
        self.assertTrue(np.all(blocked[0, 0, :, 0]))
        assert_array_equal(blocked[1, 0], causal_mask(3))

    def test_spec_rejects_full_padding(self):
        with self.assertRaises(ValidationError):
            MaskSpec(MaskKind.CAUSAL, [3]).blocked(3, 3)


class MaskedAttentionTest(unittest.TestCase):
    def setUp(self):
        self.params = AttentionParams.initialize(8, 2, RngStream(0))
        self.generator = np.random.default_rng(0)

    def test_single_position(self):
        x = Tensor(self.generator.standard_normal((1, 8)))
        _, weights = masked_attention(x, x, x, self.params, MaskSpec())
        assert_array_equal(weights, np.ones((2, 1, 1)))

    def test_first_row_is_forced(self):
        x = Tensor(self.generator.standard_normal((2, 8)))
        _, weights = masked_attention(x, x, x, self.params, MaskSpec())
        assert_array_equal(weights[:, 0], [[1.0, 0.0], [1.0, 0.0]])

    def test_matches_straight_line_reference(self):
        x = self.generator.standard_normal((3, 8))
        output, weights = masked_attention(Tensor(x), Tensor(x), Tensor(x),
                                           self.params, MaskSpec())
        expected = reference_attention(x, x, self.params, causal_mask(3))
        assert_allclose(output.data, expected, atol=1e-10)
        assert_allclose(weights.sum(axis=-1), np.ones((2, 3)), atol=1e-9)
        self.assertTrue(np.all(weights[:, causal_mask(3)] == 0.0))

    def test_unmasked_cross_attention(self):
        x_q = self.generator.standard_normal((2, 8))
        x_kv = self.generator.standard_normal((4, 8))
        output, weights = masked_attention(
            Tensor(x_q), Tensor(x_kv), Tensor(x_kv), self.params,
            MaskSpec(MaskKind.NONE))
        self.assertEqual(weights.shape, (2, 2, 4))
        assert_allclose(output.data,
                        reference_attention(x_q, x_kv, self.params,
                                            np.zeros((2, 4), dtype=bool)),
                        atol=1e-10)

    def test_future_values_do_not_leak(self):
        x = self.generator.standard_normal((5, 8))
        base, _ = masked_attention(Tensor(x), Tensor(x), Tensor(x),
                                   self.params, MaskSpec())
        for t in range(4):
            changed = x.copy()
            changed[t + 1:] += self.generator.standard_normal((4 - t, 8))
            out, _ = masked_attention(Tensor(x), Tensor(x), Tensor(changed),
                                      self.params, MaskSpec())
            assert_allclose(out.data[:t + 1], base.data[:t + 1], atol=1e-12)

    def test_scores_scale_with_head_width(self):
        x = Tensor(self.generator.standard_normal((3, 8)))
        one_head = AttentionParams(self.params.w_query, self.params.w_key,
                                   self.params.w_value, self.params.w_output,
                                   num_heads=1)
        two_heads = self.params
        raw_one = scaled_scores(x, x, one_head).data * math.sqrt(8)
        raw_two = scaled_scores(x, x, two_heads).data * math.sqrt(4)
        # The two heads split the single head's dot products in two parts
        assert_allclose(raw_two[0, 0] + raw_two[0, 1], raw_one[0, 0],
                        atol=1e-10)

    def test_head_permutation_equivariance(self):
        x = Tensor(self.generator.standard_normal((4, 8)))
        p = self.params
        swap = np.r_[4:8, 0:4]
        permuted = AttentionParams(
            Tensor(p.w_query.data[:, swap]), Tensor(p.w_key.data[:, swap]),
            Tensor(p.w_value.data[:, swap]), Tensor(p.w_output.data[swap]),
            num_heads=2)
        first, _ = masked_attention(x, x, x, p, MaskSpec())
        second, _ = masked_attention(x, x, x, permuted, MaskSpec())
        assert_allclose(first.data, second.data, atol=1e-12)

    def test_batched_padding(self):
        x = self.generator.standard_normal((2, 4, 8))
        output, weights = masked_attention(
            Tensor(x), Tensor(x), Tensor(x), self.params,
            MaskSpec(MaskKind.CAUSAL, [2, 0]))
        self.assertEqual(output.shape, (2, 4, 8))
        self.assertTrue(np.all(weights[0, :, :, :2] == 0.0))
        assert_array_equal(weights[0, :, :2], np.zeros((2, 2, 4)))
        assert_allclose(weights[0, :, 2:].sum(axis=-1), np.ones((2, 2)),
                        atol=1e-9)
        single, _ = masked_attention(Tensor(x[0, 2:]), Tensor(x[0, 2:]),
                                     Tensor(x[0, 2:]), self.params,
                                     MaskSpec())
        assert_allclose(output.data[0, 2:], single.data, atol=1e-10)

    def test_shape_errors(self):
        x = Tensor(np.zeros((3, 8)))
        with self.assertRaises(ShapeError):
            masked_attention(Tensor(np.zeros((3, 6))), x, x, self.params,
                             MaskSpec())
        with self.assertRaises(ShapeError):
            masked_attention(x, x, Tensor(np.zeros((2, 8))), self.params,
                             MaskSpec())

    def test_heads_must_divide_width(self):
        with self.assertRaises(ValidationError):
            AttentionParams.initialize(8, 3, RngStream(0))


class FfnTest(unittest.TestCase):
    def setUp(self):
        self.params = FfnParams.initialize(6, 12, RngStream(1))
        self.x = np.random.default_rng(1).standard_normal((5, 6))

    def test_zero_parameters(self):
        out = ffn(Tensor(self.x), zero_ffn(6, 12))
        assert_array_equal(out.data, np.zeros((5, 6)))

    def test_row_permutation(self):
        order = np.array([3, 0, 4, 1, 2])
        out = ffn(Tensor(self.x), self.params).data
        permuted = ffn(Tensor(self.x[order]), self.params).data
        assert_allclose(permuted, out[order], atol=1e-12)

    def test_single_row_matches_batch(self):
        out = ffn(Tensor(self.x), self.params).data
        for row in range(5):
            single = ffn(Tensor(self.x[row:row + 1]), self.params).data
            assert_allclose(single[0], out[row], atol=1e-12)

    def test_shape_error(self):
        with self.assertRaises(ShapeError):
            ffn(Tensor(np.zeros((2, 5))), self.params)


class SublayerTest(unittest.TestCase):
    def setUp(self):
        self.norm = LayerNormParams.initialize(8)
        self.attention = AttentionParams.initialize(8, 2, RngStream(2))
        self.x = np.random.default_rng(2).standard_normal((4, 8))
        self.memory = np.random.default_rng(3).standard_normal((4, 8))

    def zero_attention(self):
        zeros = [Tensor(np.zeros((8, 8))) for _ in range(4)]
        return AttentionParams(*zeros, num_heads=2)

    def test_zero_transform_is_identity(self):
        x = Tensor(self.x)
        for kind, params, inputs in (
                (SublayerKind.SELF_ATTN, self.zero_attention(), x),
                (SublayerKind.CROSS_ATTN, self.zero_attention(),
                 (x, Tensor(self.memory))),
                (SublayerKind.FFN, zero_ffn(8, 16), x)):
            out = sublayer(kind, inputs, params, MaskSpec(), self.norm)
            assert_array_equal(out.data, self.x)

    def test_output_shapes(self):
        x = Tensor(self.x)
        ffn_params = FfnParams.initialize(8, 16, RngStream(4))
        self.assertEqual(sublayer(SublayerKind.SELF_ATTN, x, self.attention,
                                  MaskSpec(), self.norm).shape, (4, 8))
        self.assertEqual(sublayer(SublayerKind.CROSS_ATTN,
                                  (x, Tensor(self.memory)), self.attention,
                                  MaskSpec(), self.norm).shape, (4, 8))
        self.assertEqual(sublayer(SublayerKind.FFN, x, ffn_params,
                                  MaskSpec(), self.norm).shape, (4, 8))

    def test_cross_attention_uses_raw_memory(self):
        x = Tensor(self.x)
        out = sublayer(SublayerKind.CROSS_ATTN, (x, Tensor(self.memory)),
                       self.attention, MaskSpec(), self.norm)
        normed = self.norm.apply(x).data
        expected = self.x + reference_attention(normed, self.memory,
                                                self.attention,
                                                causal_mask(4))
        assert_allclose(out.data, expected, atol=1e-10)

    def test_gradient(self):
        x = Tensor(self.x, requires_grad=True, name="x")
        memory = Tensor(self.memory, requires_grad=True, name="memory")
        weights = Tensor(np.random.default_rng(5).standard_normal((4, 8)))
        tensors = [x, memory, self.norm.gamma, self.norm.beta] + \
            list(self.attention.named_parameters().values())

        def build():
            out = sublayer(SublayerKind.CROSS_ATTN, (x, memory),
                           self.attention, MaskSpec(), self.norm)
            return (out * weights).sum()
        self.assertLess(check_gradient(build, tensors), 1e-4)

    def test_records_attention(self):
        context = ForwardContext(record_attention=True)
        sublayer(SublayerKind.SELF_ATTN, Tensor(self.x), self.attention,
                 MaskSpec(), self.norm, context, (0, "encoder_self"))
        self.assertEqual(list(context.attention), [(0, "encoder_self")])
        self.assertEqual(context.attention[(0, "encoder_self")].shape,
                         (2, 4, 4))

    def test_unknown_kind(self):
        with self.assertRaises(ValidationError):
            sublayer("conv", Tensor(self.x), self.attention, MaskSpec(),
                     self.norm)

    def test_dropout_only_in_training(self):
        x = Tensor(self.x)
        evaluation = sublayer(SublayerKind.SELF_ATTN, x, self.attention,
                              MaskSpec(), self.norm,
                              ForwardContext(dropout_rate=0.5,
                                             rng=RngStream(6)))
        reference = sublayer(SublayerKind.SELF_ATTN, x, self.attention,
                             MaskSpec(), self.norm)
        assert_array_equal(evaluation.data, reference.data)
        training = sublayer(SublayerKind.SELF_ATTN, x, self.attention,
                            MaskSpec(), self.norm,
                            ForwardContext(train=True, dropout_rate=0.5,
                                           rng=RngStream(6)))
        self.assertFalse(np.array_equal(training.data, reference.data))
