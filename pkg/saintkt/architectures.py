"""
SAINT and its three comparison architectures assembled from attention
sublayers.

All four produce one correctness probability per sequence slot:

* SAINT: exercises enter the encoder, responses (after the start token) enter
  the decoder.
* UTMTI: interactions enter the encoder, exercises enter the decoder.
* LTMTI: the interactions in recency order enter the encoder; the decoder
  queries are the target exercise repeated at every slot, so slot ``i`` sees
  only the ``i`` most recent interactions.
* SSAKT: an exercise self-attention stack feeds queries to a stack of
  exercise-interaction attention blocks.
"""

from __future__ import absolute_import
from collections import OrderedDict
import logging
import numpy as np
from .attention import (EVAL_CONTEXT, AttentionParams, FfnParams,
                        LayerNormParams, MaskSpec, sublayer)
from .constants import (Architecture, AttentionStream, EmbeddingDetail,
                        EmbeddingLimits, MaskKind, SublayerKind)
from .data import WindowedExample
from .embeddings import (EmbeddingTables, Interaction, SequenceBatch,
                         UNKNOWN_RESPONSE, exercise_stream, interaction_stream,
                         response_stream, target_stream)
from .exceptions import (CompatibilityError, ShapeError, StateError,
                         ValidationError, WindowError)
from .numerics import (RngStream, Tensor, add, matmul, reshape, sigmoid,
                       xavier_uniform, zeros)

# Configure local logger
logger = logging.getLogger(__name__)


class EncoderLayerParams(object):
    """
    One attention sublayer followed by one feed-forward sublayer, each with
    its own layer norm.

    Encoder layers use self-attention. The interaction blocks of SSAKT have
    the same shape but attend the interaction stream from the exercise
    stream.
    """

    def __init__(self, attention_norm, attention, ffn_norm, ffn):
        self._attention_norm = attention_norm
        self._attention = attention
        self._ffn_norm = ffn_norm
        self._ffn = ffn

    @staticmethod
    def initialize(d_model, num_heads, d_ff, rng, dtype=np.float64, prefix="",
                   attention_name=SublayerKind.SELF_ATTN):
        return EncoderLayerParams(
            LayerNormParams.initialize(
                d_model, dtype, "{}.{}_norm".format(prefix, attention_name)),
            AttentionParams.initialize(
                d_model, num_heads, rng.child(attention_name), dtype,
                "{}.{}".format(prefix, attention_name)),
            LayerNormParams.initialize(d_model, dtype,
                                       "{}.ffn_norm".format(prefix)),
            FfnParams.initialize(d_model, d_ff, rng.child("ffn"), dtype,
                                 "{}.ffn".format(prefix)))

    @property
    def attention_norm(self):
        return self._attention_norm

    @property
    def attention(self):
        return self._attention

    @property
    def ffn_norm(self):
        return self._ffn_norm

    @property
    def ffn(self):
        return self._ffn

    def named_parameters(self):
        named = OrderedDict()
        for part in (self._attention_norm, self._attention, self._ffn_norm,
                     self._ffn):
            named.update(part.named_parameters())
        return named

    def apply(self, x, mask, context, label=None):
        """
        Run self-attention then the feed-forward network over `x`.
        """
        x = sublayer(SublayerKind.SELF_ATTN, x, self._attention, mask,
                     self._attention_norm, context, label)
        return sublayer(SublayerKind.FFN, x, self._ffn, mask, self._ffn_norm,
                        context)

    def apply_cross(self, x, memory, mask, context, label=None):
        """
        Run attention from `x` over `memory`, then the feed-forward network.
        """
        x = sublayer(SublayerKind.CROSS_ATTN, (x, memory), self._attention,
                     mask, self._attention_norm, context, label)
        return sublayer(SublayerKind.FFN, x, self._ffn, mask, self._ffn_norm,
                        context)


class DecoderLayerParams(object):
    """
    Self-attention, attention over the encoder output and a feed-forward
    network, each a pre-norm residual sublayer.
    """

    def __init__(self, self_attn_norm, self_attn, cross_attn_norm, cross_attn,
                 ffn_norm, ffn):
        self._self_attn_norm = self_attn_norm
        self._self_attn = self_attn
        self._cross_attn_norm = cross_attn_norm
        self._cross_attn = cross_attn
        self._ffn_norm = ffn_norm
        self._ffn = ffn

    @staticmethod
    def initialize(d_model, num_heads, d_ff, rng, dtype=np.float64, prefix=""):
        def norm(name):
            return LayerNormParams.initialize(
                d_model, dtype, "{}.{}_norm".format(prefix, name))

        def attention(name):
            return AttentionParams.initialize(
                d_model, num_heads, rng.child(name), dtype,
                "{}.{}".format(prefix, name))

        return DecoderLayerParams(
            norm(SublayerKind.SELF_ATTN), attention(SublayerKind.SELF_ATTN),
            norm(SublayerKind.CROSS_ATTN), attention(SublayerKind.CROSS_ATTN),
            norm(SublayerKind.FFN),
            FfnParams.initialize(d_model, d_ff, rng.child("ffn"), dtype,
                                 "{}.ffn".format(prefix)))

    @property
    def self_attn(self):
        return self._self_attn

    @property
    def cross_attn(self):
        return self._cross_attn

    @property
    def ffn(self):
        return self._ffn

    def named_parameters(self):
        named = OrderedDict()
        for part in (self._self_attn_norm, self._self_attn,
                     self._cross_attn_norm, self._cross_attn, self._ffn_norm,
                     self._ffn):
            named.update(part.named_parameters())
        return named

    def apply(self, y, memory, mask, context, layer=None):
        """
        Run the three sublayers over the query stream `y`, attending
        `memory` in the middle one.
        """
        y = sublayer(SublayerKind.SELF_ATTN, y, self._self_attn, mask,
                     self._self_attn_norm, context,
                     (layer, AttentionStream.DECODER_SELF))
        y = sublayer(SublayerKind.CROSS_ATTN, (y, memory), self._cross_attn,
                     mask, self._cross_attn_norm, context,
                     (layer, AttentionStream.CROSS))
        return sublayer(SublayerKind.FFN, y, self._ffn, mask, self._ffn_norm,
                        context)


class PredictionParams(object):
    """
    Linear prediction layer, ``sigmoid(x w + b)``.
    """

    def __init__(self, weight, bias):
        self._weight = weight
        self._bias = bias

    @staticmethod
    def initialize(d_model, rng, dtype=np.float64):
        return PredictionParams(
            xavier_uniform(d_model, 1, rng, dtype=dtype,
                           name="prediction.weight"),
            zeros((1,), dtype=dtype, name="prediction.bias"))

    @property
    def weight(self):
        return self._weight

    @property
    def bias(self):
        return self._bias

    def named_parameters(self):
        return OrderedDict((tensor.name, tensor)
                           for tensor in (self._weight, self._bias))

    def apply(self, x):
        """
        Map ``[batch, n, d_model]`` to probabilities ``[batch, n]``.
        """
        logits = add(matmul(x, self._weight), self._bias)
        return sigmoid(reshape(logits, x.shape[:-1]))


class ModelParams(object):
    """
    Complete parameter set of one architecture.

    For SSAKT the encoder layers are the exercise self-attention blocks and
    the decoder layers are the exercise-interaction attention blocks (both
    :class:`EncoderLayerParams`).
    """

    def __init__(self, architecture, embeddings, encoder_layers,
                 decoder_layers, prediction):
        if architecture not in Architecture.ALL:
            raise ValidationError(
                "Unknown architecture: '{}'".format(architecture))
        if len(encoder_layers) != len(decoder_layers):
            raise ValidationError("Both stacks must have the same depth")
        self._architecture = architecture
        self._embeddings = embeddings
        self._encoder_layers = list(encoder_layers)
        self._decoder_layers = list(decoder_layers)
        self._prediction = prediction

    @staticmethod
    def initialize(config, num_exercises, num_categories):
        """
        Create Xavier-initialized parameters. Every parameter tensor is drawn
        from its own stream derived from the configured seed.

        :param saintkt.config.TrainConfig config: Hyperparameters.
        :param int num_exercises: Size of the exercise vocabulary.
        :param int num_categories: Size of the category vocabulary.
        :rtype: ModelParams
        """
        rng = RngStream(config.seed).child("init")
        dtype = config.numpy_dtype
        d_model, heads, d_ff = config.d_model, config.num_heads, config.ffn_dim
        embeddings = EmbeddingTables.initialize(
            num_exercises, num_categories, config.window, d_model,
            config.embedding_detail, rng.child("embeddings"), dtype)
        encoder_layers = []
        decoder_layers = []
        for layer in range(config.num_layers):
            if config.architecture == Architecture.SSAKT:
                encoder_layers.append(EncoderLayerParams.initialize(
                    d_model, heads, d_ff, rng.child("exercise", layer), dtype,
                    "exercise.{}".format(layer)))
                decoder_layers.append(EncoderLayerParams.initialize(
                    d_model, heads, d_ff, rng.child("interaction", layer),
                    dtype, "interaction.{}".format(layer),
                    attention_name=SublayerKind.CROSS_ATTN))
            else:
                encoder_layers.append(EncoderLayerParams.initialize(
                    d_model, heads, d_ff, rng.child("encoder", layer), dtype,
                    "encoder.{}".format(layer)))
                decoder_layers.append(DecoderLayerParams.initialize(
                    d_model, heads, d_ff, rng.child("decoder", layer), dtype,
                    "decoder.{}".format(layer)))
        prediction = PredictionParams.initialize(
            d_model, rng.child("prediction"), dtype)
        return ModelParams(config.architecture, embeddings, encoder_layers,
                           decoder_layers, prediction)

    @property
    def architecture(self):
        """
        Architecture tag, a member of
        :class:`saintkt.constants.Architecture`

        :rtype: str
        """
        return self._architecture

    @property
    def embeddings(self):
        return self._embeddings

    @property
    def encoder_layers(self):
        return self._encoder_layers

    @property
    def decoder_layers(self):
        return self._decoder_layers

    @property
    def prediction(self):
        return self._prediction

    @property
    def num_layers(self):
        return len(self._encoder_layers)

    def named_parameters(self):
        """
        Return every parameter tensor keyed by its name, in a fixed order.

        :rtype: collections.OrderedDict
        """
        named = OrderedDict(self._embeddings.named_parameters())
        for layer in self._encoder_layers + self._decoder_layers:
            named.update(layer.named_parameters())
        named.update(self._prediction.named_parameters())
        return named

    def parameters(self):
        return list(self.named_parameters().values())

    def parameter_count(self):
        """
        Total number of scalar parameters.

        :rtype: int
        """
        return int(sum(tensor.size for tensor in self.parameters()))

    def load_arrays(self, arrays):
        """
        Overwrite the parameter values.

        :param dict arrays: Arrays keyed by parameter name; must name every
            parameter with a matching shape.
        :raises CompatibilityError: If a name is missing or unexpected, or a
            shape differs.
        """
        named = self.named_parameters()
        missing = set(named) - set(arrays)
        unexpected = set(arrays) - set(named)
        if missing or unexpected:
            raise CompatibilityError(
                "Parameter names do not match (missing: {}, unexpected: "
                "{})".format(sorted(missing), sorted(unexpected)))
        for name, tensor in named.items():
            array = np.asarray(arrays[name])
            if array.shape != tensor.shape:
                raise CompatibilityError(
                    "Parameter '{}' has shape {}, expected {}".format(
                        name, array.shape, tensor.shape))
            tensor.data = np.array(array, dtype=tensor.dtype, copy=True)
            tensor.zero_grad()

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()


def expected_parameter_count(config, num_exercises, num_categories):
    """
    Closed-form parameter count of the model described by `config`.

    :param saintkt.config.TrainConfig config: Hyperparameters.
    :param int num_exercises: Size of the exercise vocabulary.
    :param int num_categories: Size of the category vocabulary.
    :rtype: int
    """
    d_model, d_ff = config.d_model, config.ffn_dim
    rows = (num_exercises + 1) + (num_categories + 1) + config.window + 2 + 1
    if config.embedding_detail == EmbeddingDetail.B:
        rows += EmbeddingLimits.ELAPSED_BUCKETS + \
            EmbeddingLimits.TIMESTAMP_BUCKETS
    attention = 4 * d_model * d_model
    feed_forward = 2 * d_model * d_ff + d_ff + d_model
    norm = 2 * d_model
    encoder = attention + feed_forward + 2 * norm
    decoder = 2 * attention + feed_forward + 3 * norm
    if config.architecture == Architecture.SSAKT:
        stacks = 2 * config.num_layers * encoder
    else:
        stacks = config.num_layers * (encoder + decoder)
    return d_model * rows + stacks + d_model + 1


def _as_batch(*streams):
    single = streams[0].ndim == 2
    if single:
        streams = tuple(reshape(stream, (1,) + stream.shape)
                        for stream in streams)
    for stream in streams:
        if stream.shape != streams[0].shape:
            raise ShapeError(
                "Input streams of shapes {} and {} are not aligned".format(
                    streams[0].shape, stream.shape))
    return streams, single


def _check_window(params, length):
    window = params.embeddings.window
    if length > window:
        raise WindowError(
            "Sequence of length {} exceeds window {}".format(length, window))


def _finish(params, output, single):
    probabilities = params.prediction.apply(output)
    if single:
        return reshape(probabilities, probabilities.shape[1:])
    return probabilities


def _encoder_decoder(encoder_in, decoder_in, params, mask, context):
    (encoder_in, decoder_in), single = _as_batch(encoder_in, decoder_in)
    _check_window(params, encoder_in.shape[1])
    memory = context.dropout(encoder_in)
    for layer, params_layer in enumerate(params.encoder_layers):
        memory = params_layer.apply(
            memory, mask, context, (layer, AttentionStream.ENCODER_SELF))
    output = context.dropout(decoder_in)
    for layer, params_layer in enumerate(params.decoder_layers):
        output = params_layer.apply(output, memory, mask, context, layer)
    return _finish(params, output, single)


def saint_forward(exercises, responses, params, mask=None,
                  context=EVAL_CONTEXT):
    """
    SAINT: the encoder self-attends the exercise embeddings and the decoder
    self-attends the response embeddings while attending the encoder output.

    :param saintkt.numerics.Tensor exercises: Exercise stream ``[k, d]`` or
        ``[batch, k, d]``.
    :param saintkt.numerics.Tensor responses: Response stream (start token
        first), aligned with `exercises`.
    :param ModelParams params: Parameters of a SAINT model.
    :param saintkt.attention.MaskSpec mask: Mask; causal without padding by
        default.
    :param saintkt.attention.ForwardContext context: Forward pass settings.
    :return: Probabilities ``[k]`` or ``[batch, k]``.
    :rtype: saintkt.numerics.Tensor
    """
    return _encoder_decoder(exercises, responses, params,
                            mask or MaskSpec(MaskKind.CAUSAL), context)


def utmti_forward(interactions, exercises, params, mask=None,
                  context=EVAL_CONTEXT):
    """
    UTMTI: SAINT with the streams swapped, interactions (start token first)
    entering the encoder and exercises entering the decoder.

    :rtype: saintkt.numerics.Tensor
    """
    return _encoder_decoder(interactions, exercises, params,
                            mask or MaskSpec(MaskKind.CAUSAL), context)


def ltmti_forward(interactions, target, params, mask=None,
                  context=EVAL_CONTEXT):
    """
    LTMTI: the encoder self-attends the interactions in recency order (start
    token first); the decoder queries are the target exercise at every slot.
    Output slot ``i`` is the candidate prediction inferred from the target
    and the ``i`` most recent interactions.

    :param saintkt.numerics.Tensor interactions: Reversed interaction stream.
    :param saintkt.numerics.Tensor target: Target exercise stream aligned
        with `interactions`, or a single ``[d]`` target embedding.
    :rtype: saintkt.numerics.Tensor
    """
    if target.ndim == 1:
        target = add(Tensor(np.zeros(interactions.shape,
                                     dtype=interactions.dtype)), target)
    return _encoder_decoder(interactions, target, params,
                            mask or MaskSpec(MaskKind.CAUSAL), context)


def ssakt_forward(exercises, interactions, params, mask=None,
                  context=EVAL_CONTEXT):
    """
    SSAKT: at every layer the exercise stream self-attends, then its output
    queries the interaction stream of the previous layer. The last
    interaction stream output feeds the prediction layer.

    :param saintkt.numerics.Tensor exercises: Exercise stream.
    :param saintkt.numerics.Tensor interactions: Interaction stream (start
        token first), aligned with `exercises`.
    :rtype: saintkt.numerics.Tensor
    """
    mask = mask or MaskSpec(MaskKind.CAUSAL)
    (exercises, interactions), single = _as_batch(exercises, interactions)
    _check_window(params, exercises.shape[1])
    x = context.dropout(exercises)
    y = context.dropout(interactions)
    for layer, (exercise_block, interaction_block) in enumerate(
            zip(params.encoder_layers, params.decoder_layers)):
        x = exercise_block.apply(x, mask, context,
                                 (layer, AttentionStream.ENCODER_SELF))
        y = interaction_block.apply_cross(x, y, mask, context,
                                          (layer, AttentionStream.CROSS))
    return _finish(params, y, single)


class KnowledgeTracer(object):
    """
    A model ready to be trained or queried: hyperparameters plus parameters,
    dispatching to the configured architecture.
    """

    def __init__(self, config, params):
        self._config = config
        self._params = params

    @staticmethod
    def create(config, num_exercises, num_categories):
        """
        Create a freshly initialized model.

        :param saintkt.config.TrainConfig config: Hyperparameters.
        :param int num_exercises: Size of the exercise vocabulary.
        :param int num_categories: Size of the category vocabulary.
        :rtype: KnowledgeTracer
        """
        params = ModelParams.initialize(config, num_exercises, num_categories)
        logger.debug("Initialized %s model with %d parameters",
                     config.architecture, params.parameter_count())
        return KnowledgeTracer(config, params)

    @property
    def config(self):
        return self._config

    @property
    def params(self):
        return self._params

    @property
    def architecture(self):
        return self._config.architecture

    def _require_params(self):
        if self._params is None:
            raise StateError("Model parameters are not loaded")
        return self._params

    def forward(self, batch, context=EVAL_CONTEXT):
        """
        Compute the probability of every slot of a batch.

        :param saintkt.embeddings.SequenceBatch batch: The batch.
        :param saintkt.attention.ForwardContext context: Forward pass
            settings.
        :return: Probabilities ``[batch, width]``.
        :rtype: saintkt.numerics.Tensor
        """
        params = self._require_params()
        tables = params.embeddings
        detail = self._config.embedding_detail
        if batch.width > tables.window:
            raise WindowError(
                "Batch width {} exceeds window {}".format(
                    batch.width, tables.window))
        mask = MaskSpec(MaskKind.CAUSAL, batch.pad_lengths)
        architecture = params.architecture
        if architecture == Architecture.SAINT:
            return saint_forward(exercise_stream(batch, tables),
                                 response_stream(batch, tables, detail),
                                 params, mask, context)
        if architecture == Architecture.UTMTI:
            return utmti_forward(interaction_stream(batch, tables, detail),
                                 exercise_stream(batch, tables),
                                 params, mask, context)
        if architecture == Architecture.LTMTI:
            return ltmti_forward(
                interaction_stream(batch, tables, detail, reverse=True),
                target_stream(batch, tables), params, mask, context)
        return ssakt_forward(exercise_stream(batch, tables),
                             interaction_stream(batch, tables, detail),
                             params, mask, context)

    def prepare_examples(self, examples):
        """
        Turn windowed examples into model examples. LTMTI predicts only the
        last slot of a sequence, so each of its examples expands into one
        prefix example per target; the other architectures use the examples
        unchanged.

        :param list examples: :class:`saintkt.data.WindowedExample` items.
        :rtype: list
        """
        if self.architecture != Architecture.LTMTI:
            return list(examples)
        expanded = []
        for example in examples:
            for index, is_target in enumerate(example.target_mask):
                if is_target:
                    prefix = example.interactions[:index + 1]
                    expanded.append(WindowedExample(
                        prefix, [False] * index + [True], example.window))
        return expanded

    def make_batch(self, examples):
        """
        Pack prepared examples into a batch.

        :rtype: saintkt.embeddings.SequenceBatch
        """
        return SequenceBatch.from_sequences(
            [example.interactions for example in examples],
            [example.target_mask for example in examples])

    def loss_targets(self, batch):
        """
        Labels and mask of the slots contributing to the training loss.
        LTMTI trains every candidate slot against the response of the last
        slot.

        :return: Tuple of labels and boolean mask, both ``[batch, width]``.
        :rtype: tuple
        """
        if self.architecture != Architecture.LTMTI:
            return batch.labels, batch.target_mask
        labels = np.repeat(batch.labels[:, -1:], batch.width, axis=1)
        mask = batch.real_mask & batch.target_mask[:, -1:]
        return labels, mask

    def score_targets(self, batch):
        """
        Labels and mask of the slots scored by evaluation. LTMTI is scored
        on its last slot, the prediction from the longest history.

        :return: Tuple of labels and boolean mask, both ``[batch, width]``.
        :rtype: tuple
        """
        if self.architecture != Architecture.LTMTI:
            return batch.labels, batch.target_mask
        mask = np.zeros_like(batch.target_mask)
        mask[:, -1] = batch.target_mask[:, -1]
        return batch.labels, mask

    def predict_next(self, history, target_exercise):
        """
        Probability that the next response, to `target_exercise`, is correct.
        Only the most recent ``window - 1`` interactions are used.

        :param list history: Preceding :class:`saintkt.embeddings.Interaction`
            items, oldest first (may be empty).
        :param saintkt.embeddings.ExerciseInfo target_exercise: The exercise.
        :return: Probability in ``(0, 1)``.
        :rtype: float
        """
        params = self._require_params()
        keep = params.embeddings.window - 1
        history = list(history)
        if len(history) > keep:
            logger.warning("Truncating history of %d interactions to the "
                           "%d most recent", len(history), keep)
            history = history[len(history) - keep:] if keep else []
        sequence = history + [Interaction(target_exercise, UNKNOWN_RESPONSE)]
        batch = SequenceBatch.from_sequences([sequence])
        probabilities = self.forward(batch, EVAL_CONTEXT)
        return float(probabilities.data[0, -1])
