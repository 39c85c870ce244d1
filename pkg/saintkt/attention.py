"""
Masked multi-head attention, the position-wise feed-forward network and the
pre-norm residual sublayer wrapping both.

Inputs are either single sequences ``[n, d_model]`` or batches
``[batch, n, d_model]``.
"""

from __future__ import absolute_import
from collections import OrderedDict
import logging
import math
import numpy as np
from .constants import MaskKind, SublayerKind
from .exceptions import ShapeError, ValidationError
from .numerics import (Tensor, add, dropout, layer_norm, masked_fill, matmul,
                       ones, relu, reshape, scale, softmax, transpose,
                       xavier_uniform, zeros)

# Configure local logger
logger = logging.getLogger(__name__)


def _prefixed(prefix, name):
    return "{}.{}".format(prefix, name) if prefix else name


class AttentionParams(object):
    """
    Projections of one multi-head attention block.

    Each of the query, key and value projections is a ``[d_model, d_model]``
    matrix whose ``i``-th block of ``d_model / num_heads`` columns is the
    projection of head ``i``. The output projection maps the concatenated
    heads back to ``d_model``. The block has no biases.
    """

    def __init__(self, w_query, w_key, w_value, w_output, num_heads):
        d_model = w_query.shape[0]
        if num_heads < 1 or d_model % num_heads:
            raise ValidationError(
                "Head count {} does not divide d_model {}".format(
                    num_heads, d_model))
        for tensor in (w_query, w_key, w_value, w_output):
            if tensor.shape != (d_model, d_model):
                raise ShapeError(
                    "Attention projection has shape {}, expected {}".format(
                        tensor.shape, (d_model, d_model)))
        self._w_query = w_query
        self._w_key = w_key
        self._w_value = w_value
        self._w_output = w_output
        self._num_heads = num_heads

    @staticmethod
    def initialize(d_model, num_heads, rng, dtype=np.float64, prefix=""):
        """
        Create Xavier-initialized projections.

        :param int d_model: Model width.
        :param int num_heads: Number of heads, a divisor of `d_model`.
        :param saintkt.numerics.RngStream rng: Stream to draw from.
        :param dtype: Floating point type.
        :param str prefix: Prefix of the parameter names.
        :rtype: AttentionParams
        """
        matrices = [xavier_uniform(d_model, d_model, rng.child(name),
                                   dtype=dtype, name=_prefixed(prefix, name))
                    for name in ("w_query", "w_key", "w_value", "w_output")]
        return AttentionParams(*matrices, num_heads=num_heads)

    @property
    def w_query(self):
        return self._w_query

    @property
    def w_key(self):
        return self._w_key

    @property
    def w_value(self):
        return self._w_value

    @property
    def w_output(self):
        return self._w_output

    @property
    def num_heads(self):
        """
        Number of attention heads

        :rtype: int
        """
        return self._num_heads

    @property
    def d_model(self):
        return self._w_query.shape[0]

    @property
    def head_dim(self):
        """
        Width of each head, ``d_model / num_heads``

        :rtype: int
        """
        return self.d_model // self._num_heads

    def named_parameters(self):
        return OrderedDict((tensor.name, tensor) for tensor in (
            self._w_query, self._w_key, self._w_value, self._w_output))


class FfnParams(object):
    """
    Weights and biases of the position-wise feed-forward network.
    """

    def __init__(self, w_inner, b_inner, w_outer, b_outer):
        d_model, d_ff = w_inner.shape
        expected = ((d_model, d_ff), (d_ff,), (d_ff, d_model), (d_model,))
        actual = (w_inner.shape, b_inner.shape, w_outer.shape, b_outer.shape)
        if actual != expected:
            raise ShapeError(
                "Feed-forward parameters have shapes {}, expected {}".format(
                    actual, expected))
        self._w_inner = w_inner
        self._b_inner = b_inner
        self._w_outer = w_outer
        self._b_outer = b_outer

    @staticmethod
    def initialize(d_model, d_ff, rng, dtype=np.float64, prefix=""):
        """
        Create Xavier-initialized weights and zero biases.

        :param int d_model: Model width.
        :param int d_ff: Inner width.
        :param saintkt.numerics.RngStream rng: Stream to draw from.
        :param dtype: Floating point type.
        :param str prefix: Prefix of the parameter names.
        :rtype: FfnParams
        """
        return FfnParams(
            xavier_uniform(d_model, d_ff, rng.child("w_inner"), dtype=dtype,
                           name=_prefixed(prefix, "w_inner")),
            zeros((d_ff,), dtype=dtype, name=_prefixed(prefix, "b_inner")),
            xavier_uniform(d_ff, d_model, rng.child("w_outer"), dtype=dtype,
                           name=_prefixed(prefix, "w_outer")),
            zeros((d_model,), dtype=dtype, name=_prefixed(prefix, "b_outer")))

    @property
    def w_inner(self):
        return self._w_inner

    @property
    def b_inner(self):
        return self._b_inner

    @property
    def w_outer(self):
        return self._w_outer

    @property
    def b_outer(self):
        return self._b_outer

    def named_parameters(self):
        return OrderedDict((tensor.name, tensor) for tensor in (
            self._w_inner, self._b_inner, self._w_outer, self._b_outer))


class LayerNormParams(object):
    """
    Scale and shift of a layer normalization.
    """

    def __init__(self, gamma, beta):
        self._gamma = gamma
        self._beta = beta

    @staticmethod
    def initialize(d_model, dtype=np.float64, prefix=""):
        return LayerNormParams(
            ones((d_model,), dtype=dtype, name=_prefixed(prefix, "gamma")),
            zeros((d_model,), dtype=dtype, name=_prefixed(prefix, "beta")))

    @property
    def gamma(self):
        return self._gamma

    @property
    def beta(self):
        return self._beta

    def apply(self, x):
        return layer_norm(x, self._gamma, self._beta)

    def named_parameters(self):
        return OrderedDict((tensor.name, tensor)
                           for tensor in (self._gamma, self._beta))


def causal_mask(n):
    """
    Return the ``[n, n]`` causal mask. Entry ``(i, j)`` is `True` (blocked)
    exactly when ``j > i``.

    :param int n: Sequence length, at least 1.
    :rtype: numpy.ndarray
    """
    if n < 1:
        raise ValidationError("Mask size must be positive, got {}".format(n))
    return np.triu(np.ones((n, n), dtype=bool), k=1)


class MaskSpec(object):
    """
    Describes which keys each query may attend: a mask kind plus the number
    of leading pad slots of each sequence, which are never attended.
    """

    def __init__(self, kind=MaskKind.CAUSAL, pad_lengths=None):
        if kind not in (MaskKind.CAUSAL, MaskKind.NONE):
            raise ValidationError("Unknown mask kind: '{}'".format(kind))
        self._kind = kind
        self._pad_lengths = None if pad_lengths is None \
            else np.asarray(pad_lengths, dtype=np.int64)

    @property
    def kind(self):
        return self._kind

    @property
    def pad_lengths(self):
        """
        Leading pad slots per sequence (`None` if there is no padding)

        :rtype: numpy.ndarray
        """
        return self._pad_lengths

    def blocked(self, num_queries, num_keys):
        """
        Build the boolean array of blocked query / key pairs.

        :param int num_queries: Number of query slots.
        :param int num_keys: Number of key slots.
        :return: Array of shape ``[batch, 1, num_queries, num_keys]`` (batch
            is 1 without pad lengths), `True` where attention is blocked.
        :rtype: numpy.ndarray
        """
        if self._kind == MaskKind.CAUSAL:
            block = np.arange(num_keys)[None, :] > \
                np.arange(num_queries)[:, None]
        else:
            block = np.zeros((num_queries, num_keys), dtype=bool)
        block = block[None, None, :, :]
        if self._pad_lengths is None:
            return block
        if np.any(self._pad_lengths >= num_keys):
            raise ValidationError(
                "Pad lengths must be shorter than the sequence")
        pads = np.arange(num_keys)[None, :] < self._pad_lengths[:, None]
        return np.logical_or(block, pads[:, None, None, :])


class ForwardContext(object):
    """
    Settings of one forward pass: training mode, dropout and an optional
    recorder of the attention weights.
    """

    def __init__(self, train=False, dropout_rate=0.0, rng=None,
                 attention_dropout=False, record_attention=False):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValidationError(
                "Dropout rate must be in [0, 1), got {}".format(dropout_rate))
        self._train = train
        self._dropout_rate = dropout_rate
        self._rng = rng
        self._attention_dropout = attention_dropout
        self._attention = OrderedDict() if record_attention else None

    @property
    def train(self):
        return self._train

    @property
    def dropout_rate(self):
        return self._dropout_rate

    @property
    def attention_dropout(self):
        return self._attention_dropout

    @property
    def attention(self):
        """
        Recorded attention weights keyed by ``(layer, stream)`` (`None` when
        not recording)

        :rtype: collections.OrderedDict
        """
        return self._attention

    def dropout(self, x):
        return dropout(x, self._dropout_rate, self._rng, self._train)

    def dropout_weights(self, weights):
        if not self._attention_dropout:
            return weights
        return self.dropout(weights)

    def record(self, label, weights):
        if self._attention is not None and label is not None:
            self._attention[label] = weights


#: Forward context for deterministic inference.
EVAL_CONTEXT = ForwardContext()


def _split_heads(x, num_heads):
    batch, length, width = x.shape
    return transpose(reshape(x, (batch, length, num_heads,
                                 width // num_heads)), (0, 2, 1, 3))


def _as_batch(x):
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 3:
        return x, False
    raise ShapeError(
        "Attention inputs must be [n, d_model] or [batch, n, d_model], got "
        "{}".format(x.shape))


def _check_inputs(query_in, key_in, value_in, params):
    for tensor in (query_in, key_in, value_in):
        if tensor.shape[-1] != params.d_model:
            raise ShapeError(
                "Attention input of shape {} does not have d_model {} "
                "columns".format(tensor.shape, params.d_model))
    if key_in.shape != value_in.shape:
        raise ShapeError(
            "Key shape {} and value shape {} differ".format(
                key_in.shape, value_in.shape))
    if query_in.shape[0] != key_in.shape[0]:
        raise ShapeError(
            "Query shape {} and key shape {} have different batch "
            "sizes".format(query_in.shape, key_in.shape))


def scaled_scores(query_in, key_in, params):
    """
    Compute the per-head score matrices ``Q K^T / sqrt(d)`` before masking.

    :param saintkt.numerics.Tensor query_in: Query stream.
    :param saintkt.numerics.Tensor key_in: Key stream.
    :param AttentionParams params: Projections.
    :return: Tensor ``[batch, heads, n_q, n_k]``.
    :rtype: saintkt.numerics.Tensor
    """
    query_in, _ = _as_batch(query_in)
    key_in, _ = _as_batch(key_in)
    heads = params.num_heads
    query = _split_heads(matmul(query_in, params.w_query), heads)
    key = _split_heads(matmul(key_in, params.w_key), heads)
    return scale(matmul(query, transpose(key, (0, 1, 3, 2))),
                 1.0 / math.sqrt(params.head_dim))


def masked_attention(query_in, key_in, value_in, params, mask,
                     context=EVAL_CONTEXT):
    """
    Multi-head attention: per head, project the inputs, scale the scores by
    ``1 / sqrt(d)``, write ``-inf`` into blocked entries, normalize each row
    with softmax and weight the values. The heads are concatenated and
    projected by the output matrix.

    :param saintkt.numerics.Tensor query_in: Query stream ``[n_q, d_model]``
        or ``[batch, n_q, d_model]``.
    :param saintkt.numerics.Tensor key_in: Key stream.
    :param saintkt.numerics.Tensor value_in: Value stream, same shape as the
        key stream.
    :param AttentionParams params: Projections.
    :param MaskSpec mask: Mask to apply.
    :param ForwardContext context: Forward pass settings.
    :return: Tuple of the output (shaped like the query stream) and the
        attention weights as an array ``[batch, heads, n_q, n_k]``
        (``[heads, n_q, n_k]`` for unbatched input).
    :rtype: tuple
    :raises ShapeError: On mismatched dimensions.
    """
    query_in, single = _as_batch(query_in)
    key_in, _ = _as_batch(key_in)
    value_in, _ = _as_batch(value_in)
    _check_inputs(query_in, key_in, value_in, params)

    batch, num_queries, d_model = query_in.shape
    num_keys = key_in.shape[1]
    scores = scaled_scores(query_in, key_in, params)
    weights = softmax(
        masked_fill(scores, mask.blocked(num_queries, num_keys),
                    -np.inf), axis=-1)
    value = _split_heads(matmul(value_in, params.w_value), params.num_heads)
    heads = matmul(context.dropout_weights(weights), value)
    concat = reshape(transpose(heads, (0, 2, 1, 3)),
                     (batch, num_queries, d_model))
    output = matmul(concat, params.w_output)
    weight_data = weights.data
    if single:
        return reshape(output, (num_queries, d_model)), weight_data[0]
    return output, weight_data


def ffn(x, params):
    """
    Position-wise feed-forward network,
    ``relu(x W_inner + b_inner) W_outer + b_outer``.

    :param saintkt.numerics.Tensor x: Input ``[..., d_model]``.
    :param FfnParams params: Weights and biases.
    :rtype: saintkt.numerics.Tensor
    """
    if x.shape[-1] != params.w_inner.shape[0]:
        raise ShapeError(
            "Feed-forward input of shape {} does not match weights of shape "
            "{}".format(x.shape, params.w_inner.shape))
    inner = relu(add(matmul(x, params.w_inner), params.b_inner))
    return add(matmul(inner, params.w_outer), params.b_outer)


def sublayer(kind, inputs, params, mask, norm, context=EVAL_CONTEXT,
             label=None):
    """
    Pre-norm residual sublayer, ``x + dropout(F(layer_norm(x)))``.

    For ``cross_attn`` the inputs are a tuple ``(x, memory)``: the layer norm
    applies to the query stream `x` only and `memory` serves as keys and
    values unchanged.

    :param str kind: A member of :class:`saintkt.constants.SublayerKind`.
    :param inputs: The stream `x`, or ``(x, memory)`` for ``cross_attn``.
    :param params: :class:`AttentionParams` or :class:`FfnParams`.
    :param MaskSpec mask: Mask of the attention kinds (ignored by ``ffn``).
    :param LayerNormParams norm: The layer norm applied to `x`.
    :param ForwardContext context: Forward pass settings.
    :param tuple label: ``(layer, stream)`` under which attention weights are
        recorded.
    :return: Output shaped like `x`.
    :rtype: saintkt.numerics.Tensor
    """
    if kind == SublayerKind.CROSS_ATTN:
        x, memory = inputs
    elif kind in (SublayerKind.SELF_ATTN, SublayerKind.FFN):
        x = inputs
    else:
        raise ValidationError("Unknown sublayer kind: '{}'".format(kind))

    normed = norm.apply(x)
    if kind == SublayerKind.FFN:
        transformed = ffn(normed, params)
    else:
        source = memory if kind == SublayerKind.CROSS_ATTN else normed
        transformed, weights = masked_attention(normed, source, source,
                                                params, mask, context)
        context.record(label, weights)
    return add(x, context.dropout(transformed))
