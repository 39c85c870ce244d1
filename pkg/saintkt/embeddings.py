"""
Attribute embeddings and composition of the model input streams.

Every composed embedding is the exact sum of its attribute table rows. The
streams operate on a :class:`SequenceBatch`: a left-padded batch of sequences
where slot ``t`` of a sequence with ``p`` leading pad slots holds the
interaction with zero-based index ``t - p``.
"""

from __future__ import absolute_import
from collections import OrderedDict, namedtuple
import logging
import math
import numpy as np
from .constants import EmbeddingDetail, EmbeddingLimits
from .exceptions import ValidationError, WindowError
from .numerics import Tensor, add, take, where, xavier_uniform

# Configure local logger
logger = logging.getLogger(__name__)

#: Exercise attributes: dense exercise id and dense category id.
ExerciseInfo = namedtuple("ExerciseInfo", ["exercise_id", "category_id"])

#: Response attributes: binary response, elapsed seconds and the
#: ``(month, day, hour)`` of the response.
ResponseInfo = namedtuple("ResponseInfo",
                          ["response", "elapsed_seconds", "timestamp"])

#: One record of a student's history. ``timestamp_ms`` is the absolute time
#: of the response in epoch milliseconds (`None` when unknown).
Interaction = namedtuple("Interaction",
                         ["exercise", "response", "timestamp_ms"])
Interaction.__new__.__defaults__ = (None,)

#: Response attributes used for the target slot, whose response is unknown.
UNKNOWN_RESPONSE = ResponseInfo(0, 0.0, (1, 1, 0))


def bucket_elapsed(elapsed_seconds):
    """
    Map an elapsed time to its table row: round half up to an integer, then
    cap at :attr:`EmbeddingLimits.MAX_ELAPSED_SECONDS`.

    :param float elapsed_seconds: Seconds taken to respond.
    :return: Row index in ``[0, 300]``.
    :rtype: int
    :raises ValidationError: If the value is negative or not a number.
    """
    value = float(elapsed_seconds)
    if math.isnan(value) or value < 0:
        raise ValidationError(
            "Elapsed time must be nonnegative, got {}".format(elapsed_seconds))
    if value >= EmbeddingLimits.MAX_ELAPSED_SECONDS:
        return EmbeddingLimits.MAX_ELAPSED_SECONDS
    return min(int(math.floor(value + 0.5)),
               EmbeddingLimits.MAX_ELAPSED_SECONDS)


def bucket_timestamp(month, day, hour):
    """
    Map a ``(month, day, hour)`` combination to its timestamp table row,
    ``((month - 1) * 31 + (day - 1)) * 24 + hour``.

    :param int month: Month, 1 through 12.
    :param int day: Day of the month, 1 through 31.
    :param int hour: Hour of the day, 0 through 23.
    :return: Row index in ``[0, 8928)``.
    :rtype: int
    :raises ValidationError: If a field is out of range.
    """
    for label, value, low, high in (("month", month, 1, 12),
                                    ("day", day, 1, 31),
                                    ("hour", hour, 0, 23)):
        if int(value) != value or not low <= value <= high:
            raise ValidationError(
                "Timestamp {} must be in [{}, {}], got {}".format(
                    label, low, high, value))
    return ((int(month) - 1) * 31 + (int(day) - 1)) * 24 + int(hour)


class EmbeddingTables(object):
    """
    Learned lookup tables for the exercise and response attributes plus the
    start token.

    The exercise and category tables carry one extra trailing row for ids
    that were not seen when the vocabulary was built. The elapsed time and
    timestamp tables exist only at detail level ``B``.
    """

    def __init__(self, exercise_id, category, position, response, start_token,
                 elapsed=None, timestamp=None):
        if (elapsed is None) != (timestamp is None):
            raise ValidationError(
                "Elapsed and timestamp tables must be supplied together")
        self._exercise_id = exercise_id
        self._category = category
        self._position = position
        self._response = response
        self._start_token = start_token
        self._elapsed = elapsed
        self._timestamp = timestamp

    @staticmethod
    def initialize(num_exercises, num_categories, window, d_model, detail, rng,
                   dtype=np.float64):
        """
        Create Xavier-initialized tables.

        :param int num_exercises: Size of the exercise vocabulary.
        :param int num_categories: Size of the category vocabulary.
        :param int window: Number of positions.
        :param int d_model: Embedding width.
        :param str detail: A member of
            :class:`saintkt.constants.EmbeddingDetail`.
        :param saintkt.numerics.RngStream rng: Stream to draw from.
        :param dtype: Floating point type of the tables.
        :return: The tables.
        :rtype: EmbeddingTables
        """
        if detail not in EmbeddingDetail.ALL:
            raise ValidationError(
                "Unknown embedding detail: '{}'".format(detail))
        if num_exercises < 1 or num_categories < 1 or window < 1:
            raise ValidationError(
                "Vocabulary sizes and window must be positive")

        def table(rows, name):
            return xavier_uniform(rows, d_model, rng.child(name), dtype=dtype,
                                  name="embeddings." + name)

        start = xavier_uniform(1, d_model, rng.child("start_token"),
                               dtype=dtype)
        start_token = Tensor(start.data.reshape(d_model), requires_grad=True,
                             name="embeddings.start_token")
        extras = {}
        if detail == EmbeddingDetail.B:
            extras["elapsed"] = table(EmbeddingLimits.ELAPSED_BUCKETS,
                                      "elapsed")
            extras["timestamp"] = table(EmbeddingLimits.TIMESTAMP_BUCKETS,
                                        "timestamp")
        return EmbeddingTables(
            table(num_exercises + 1, "exercise_id"),
            table(num_categories + 1, "category"),
            table(window, "position"),
            table(2, "response"),
            start_token, **extras)

    @property
    def exercise_id(self):
        """
        Exercise id table, ``[num_exercises + 1, d_model]``

        :rtype: saintkt.numerics.Tensor
        """
        return self._exercise_id

    @property
    def category(self):
        """
        Category table, ``[num_categories + 1, d_model]``

        :rtype: saintkt.numerics.Tensor
        """
        return self._category

    @property
    def position(self):
        """
        Position table shared by all streams, ``[window, d_model]``

        :rtype: saintkt.numerics.Tensor
        """
        return self._position

    @property
    def response(self):
        """
        Response value table, ``[2, d_model]``

        :rtype: saintkt.numerics.Tensor
        """
        return self._response

    @property
    def start_token(self):
        """
        Start token vector, ``[d_model]``

        :rtype: saintkt.numerics.Tensor
        """
        return self._start_token

    @property
    def elapsed(self):
        """
        Elapsed time table (`None` at detail level ``A``)

        :rtype: saintkt.numerics.Tensor
        """
        return self._elapsed

    @property
    def timestamp(self):
        """
        Timestamp table (`None` at detail level ``A``)

        :rtype: saintkt.numerics.Tensor
        """
        return self._timestamp

    @property
    def detail(self):
        """
        Detail level implied by the tables present

        :rtype: str
        """
        return EmbeddingDetail.A if self._elapsed is None else \
            EmbeddingDetail.B

    @property
    def d_model(self):
        return self._start_token.shape[0]

    @property
    def window(self):
        return self._position.shape[0]

    @property
    def num_exercises(self):
        """
        Size of the exercise vocabulary (the out-of-vocabulary row excluded)

        :rtype: int
        """
        return self._exercise_id.shape[0] - 1

    @property
    def num_categories(self):
        return self._category.shape[0] - 1

    @property
    def oov_exercise(self):
        """
        Row index reserved for unknown exercise ids

        :rtype: int
        """
        return self.num_exercises

    @property
    def oov_category(self):
        return self.num_categories

    def named_parameters(self):
        """
        Return the tables keyed by parameter name, in a fixed order.

        :rtype: collections.OrderedDict
        """
        named = OrderedDict()
        for tensor in (self._exercise_id, self._category, self._position,
                       self._response, self._start_token, self._elapsed,
                       self._timestamp):
            if tensor is not None:
                named[tensor.name] = tensor
        return named

    def _check_position(self, position):
        if not 0 <= position < self.window:
            raise WindowError(
                "Position {} outside of window {}".format(
                    position, self.window))


def embed_exercise(exercise, position, tables):
    """
    Embed one exercise: the sum of its exercise id, category and position
    rows.

    :param ExerciseInfo exercise: Exercise attributes.
    :param int position: Zero-based position, below the window.
    :param EmbeddingTables tables: Embedding tables.
    :return: Vector of width ``d_model``.
    :rtype: saintkt.numerics.Tensor
    """
    tables._check_position(position)
    rows = add(take(tables.exercise_id, exercise.exercise_id),
               take(tables.category, exercise.category_id))
    return add(rows, take(tables.position, position))


def embed_response(response, position, detail, tables, category_id=None):
    """
    Embed one response. Detail ``A`` sums the response value and position
    rows. Detail ``B`` also adds the category, timestamp and elapsed time
    rows.

    :param ResponseInfo response: Response attributes.
    :param int position: Zero-based position, below the window.
    :param str detail: A member of
        :class:`saintkt.constants.EmbeddingDetail`.
    :param EmbeddingTables tables: Embedding tables.
    :param int category_id: Category of the answered exercise (detail ``B``).
    :return: Vector of width ``d_model``.
    :rtype: saintkt.numerics.Tensor
    """
    tables._check_position(position)
    if response.response not in (0, 1):
        raise ValidationError(
            "Response must be 0 or 1, got {}".format(response.response))
    rows = add(take(tables.response, int(response.response)),
               take(tables.position, position))
    if detail == EmbeddingDetail.A:
        return rows
    if detail != EmbeddingDetail.B:
        raise ValidationError("Unknown embedding detail: '{}'".format(detail))
    if tables.elapsed is None:
        raise ValidationError("Detail B requires the elapsed and timestamp "
                              "tables")
    if category_id is None:
        raise ValidationError("Detail B requires the category id")
    rows = add(rows, take(tables.category, category_id))
    rows = add(rows, take(tables.timestamp,
                          bucket_timestamp(*response.timestamp)))
    return add(rows, take(tables.elapsed,
                          bucket_elapsed(response.elapsed_seconds)))


def build_sequences(history, target_exercise, tables, detail):
    """
    Compose the encoder and decoder inputs for one prediction: the exercise
    embeddings of the history plus the target, and the start token followed
    by the response embeddings of the history.

    :param list history: The ``k - 1`` preceding interactions.
    :param ExerciseInfo target_exercise: The exercise to predict.
    :param EmbeddingTables tables: Embedding tables.
    :param str detail: A member of
        :class:`saintkt.constants.EmbeddingDetail`.
    :return: Tuple of the exercise embeddings and the response embeddings,
        each ``[k, d_model]``.
    :rtype: tuple
    :raises WindowError: If ``k`` exceeds the window.
    """
    sequence = list(history) + [Interaction(target_exercise, UNKNOWN_RESPONSE)]
    if len(sequence) > tables.window:
        raise WindowError(
            "Sequence of {} exercises exceeds window {}".format(
                len(sequence), tables.window))
    batch = SequenceBatch.from_sequences([sequence])
    return (exercise_stream(batch, tables)[0],
            response_stream(batch, tables, detail)[0])


class SequenceBatch(object):
    """
    Left-padded batch of interaction sequences as integer attribute arrays of
    shape ``[batch, width]``.
    """

    def __init__(self, exercise_ids, category_ids, responses, elapsed,
                 timestamps, pad_lengths, target_mask):
        self._exercise_ids = exercise_ids
        self._category_ids = category_ids
        self._responses = responses
        self._elapsed = elapsed
        self._timestamps = timestamps
        self._pad_lengths = pad_lengths
        self._target_mask = target_mask

    @staticmethod
    def from_sequences(sequences, target_masks=None, width=None):
        """
        Pack interaction sequences into a batch.

        :param list sequences: Nonempty lists of :class:`Interaction`.
        :param list target_masks: Optional boolean lists, one per sequence and
            aligned with it, marking the interactions to predict. Defaults to
            every interaction.
        :param int width: Padded width (defaults to the longest sequence).
        :return: The batch.
        :rtype: SequenceBatch
        """
        if not sequences:
            raise ValidationError("A batch needs at least one sequence")
        longest = max(len(sequence) for sequence in sequences)
        width = longest if width is None else width
        if longest > width or min(len(s) for s in sequences) < 1:
            raise WindowError(
                "Sequence lengths must be in [1, {}]".format(width))

        shape = (len(sequences), width)
        exercise_ids = np.zeros(shape, dtype=np.int64)
        category_ids = np.zeros(shape, dtype=np.int64)
        responses = np.zeros(shape, dtype=np.int64)
        elapsed = np.zeros(shape, dtype=np.int64)
        timestamps = np.zeros(shape, dtype=np.int64)
        target_mask = np.zeros(shape, dtype=bool)
        pad_lengths = np.zeros(len(sequences), dtype=np.int64)
        for row, sequence in enumerate(sequences):
            pad = width - len(sequence)
            pad_lengths[row] = pad
            for slot, interaction in enumerate(sequence, pad):
                exercise, response = interaction.exercise, interaction.response
                if response.response not in (0, 1):
                    raise ValidationError(
                        "Response must be 0 or 1, got {}".format(
                            response.response))
                exercise_ids[row, slot] = exercise.exercise_id
                category_ids[row, slot] = exercise.category_id
                responses[row, slot] = response.response
                elapsed[row, slot] = bucket_elapsed(response.elapsed_seconds)
                timestamps[row, slot] = bucket_timestamp(*response.timestamp)
            if target_masks is None:
                target_mask[row, pad:] = True
            else:
                if len(target_masks[row]) != len(sequence):
                    raise ValidationError(
                        "Target mask length does not match its sequence")
                target_mask[row, pad:] = np.asarray(target_masks[row],
                                                    dtype=bool)
        return SequenceBatch(exercise_ids, category_ids, responses, elapsed,
                             timestamps, pad_lengths, target_mask)

    @property
    def exercise_ids(self):
        return self._exercise_ids

    @property
    def category_ids(self):
        return self._category_ids

    @property
    def responses(self):
        """
        Response values (0 in pad slots)

        :rtype: numpy.ndarray
        """
        return self._responses

    @property
    def elapsed(self):
        """
        Elapsed time table rows

        :rtype: numpy.ndarray
        """
        return self._elapsed

    @property
    def timestamps(self):
        """
        Timestamp table rows

        :rtype: numpy.ndarray
        """
        return self._timestamps

    @property
    def pad_lengths(self):
        """
        Number of leading pad slots of each sequence

        :rtype: numpy.ndarray
        """
        return self._pad_lengths

    @property
    def target_mask(self):
        """
        Slots whose response is a prediction target

        :rtype: numpy.ndarray
        """
        return self._target_mask

    @property
    def labels(self):
        """
        Responses as floating point labels

        :rtype: numpy.ndarray
        """
        return self._responses.astype(np.float64)

    @property
    def size(self):
        return self._exercise_ids.shape[0]

    @property
    def width(self):
        return self._exercise_ids.shape[1]

    @property
    def real_mask(self):
        """
        Slots holding an interaction rather than padding

        :rtype: numpy.ndarray
        """
        return np.arange(self.width)[None, :] >= self._pad_lengths[:, None]

    def positions(self):
        """
        Zero-based interaction index of every slot (0 in pad slots).

        :rtype: numpy.ndarray
        """
        return np.maximum(
            np.arange(self.width)[None, :] - self._pad_lengths[:, None], 0)


def _shift_right(values):
    """
    Delay an attribute array by one slot along the sequence axis.
    """
    shifted = np.zeros_like(values)
    shifted[:, 1:] = values[:, :-1]
    return shifted


def _start_slots(batch):
    """
    Boolean ``[batch, width, 1]`` array marking the first real slot.
    """
    starts = np.arange(batch.width)[None, :] == batch.pad_lengths[:, None]
    return starts[:, :, None]


def _response_rows(tables, detail, responses, category_ids, elapsed,
                   timestamps, positions):
    rows = add(take(tables.response, responses),
               take(tables.position, positions))
    if detail == EmbeddingDetail.B:
        if tables.elapsed is None:
            raise ValidationError("Detail B requires the elapsed and "
                                  "timestamp tables")
        rows = add(rows, take(tables.timestamp, timestamps))
        rows = add(rows, take(tables.elapsed, elapsed))
        if category_ids is not None:
            rows = add(rows, take(tables.category, category_ids))
    elif detail != EmbeddingDetail.A:
        raise ValidationError("Unknown embedding detail: '{}'".format(detail))
    return rows


def exercise_stream(batch, tables):
    """
    Exercise embeddings of every slot.

    :param SequenceBatch batch: The batch.
    :param EmbeddingTables tables: Embedding tables.
    :return: Tensor ``[batch, width, d_model]``.
    :rtype: saintkt.numerics.Tensor
    """
    rows = add(take(tables.exercise_id, batch.exercise_ids),
               take(tables.category, batch.category_ids))
    return add(rows, take(tables.position, batch.positions()))


def response_stream(batch, tables, detail):
    """
    Decoder input: the start token at the first real slot, then the response
    embedding of interaction ``i - 1`` at slot ``i``. A response embedding
    uses the position row of its own interaction; the start token carries no
    position row.

    :param SequenceBatch batch: The batch.
    :param EmbeddingTables tables: Embedding tables.
    :param str detail: A member of
        :class:`saintkt.constants.EmbeddingDetail`.
    :return: Tensor ``[batch, width, d_model]``.
    :rtype: saintkt.numerics.Tensor
    """
    rows = _response_rows(
        tables, detail, _shift_right(batch.responses),
        _shift_right(batch.category_ids), _shift_right(batch.elapsed),
        _shift_right(batch.timestamps), _shift_right(batch.positions()))
    return where(_start_slots(batch), tables.start_token, rows)


def _interaction_rows(tables, detail, batch, slots):
    """
    Interaction embeddings of the interactions at the supplied slots, without
    position rows.
    """
    def pick(values):
        return np.take_along_axis(values, slots, axis=1)

    exercise_rows = add(take(tables.exercise_id, pick(batch.exercise_ids)),
                        take(tables.category, pick(batch.category_ids)))
    rows = add(exercise_rows, take(tables.response, pick(batch.responses)))
    if detail == EmbeddingDetail.B:
        if tables.elapsed is None:
            raise ValidationError("Detail B requires the elapsed and "
                                  "timestamp tables")
        rows = add(rows, take(tables.timestamp, pick(batch.timestamps)))
        rows = add(rows, take(tables.elapsed, pick(batch.elapsed)))
    elif detail != EmbeddingDetail.A:
        raise ValidationError("Unknown embedding detail: '{}'".format(detail))
    return rows


def interaction_stream(batch, tables, detail, reverse=False):
    """
    Interaction embeddings with the start token at the first real slot.

    In chronological order (the default) slot ``i`` holds interaction
    ``i - 1`` with its own position row. Reversed, slot ``j`` after the start
    token holds the ``j``-th most recent interaction before the last slot,
    with position row ``j`` (its recency rank), so that a causal mask lets
    slot ``j`` see exactly the ``j`` most recent interactions.

    :param SequenceBatch batch: The batch.
    :param EmbeddingTables tables: Embedding tables.
    :param str detail: A member of
        :class:`saintkt.constants.EmbeddingDetail`.
    :param bool reverse: Whether to order by recency.
    :return: Tensor ``[batch, width, d_model]``.
    :rtype: saintkt.numerics.Tensor
    """
    width = batch.width
    slot_index = np.arange(width)[None, :]
    pads = batch.pad_lengths[:, None]
    if reverse:
        # Slot p + j holds the interaction at slot width - 1 - j
        sources = np.clip(width - 1 - (slot_index - pads), 0, width - 1)
        positions = np.maximum(slot_index - pads, 0)
    else:
        sources = np.maximum(slot_index - 1, 0)
        positions = np.maximum(slot_index - 1 - pads, 0)
    sources = np.broadcast_to(sources, batch.exercise_ids.shape)
    rows = add(_interaction_rows(tables, detail, batch, sources),
               take(tables.position, positions))
    return where(_start_slots(batch), tables.start_token, rows)


def target_stream(batch, tables):
    """
    The exercise embedding of each sequence's last slot repeated at every
    slot, at position 0.

    :param SequenceBatch batch: The batch.
    :param EmbeddingTables tables: Embedding tables.
    :return: Tensor ``[batch, width, d_model]``.
    :rtype: saintkt.numerics.Tensor
    """
    last = batch.width - 1
    exercise_ids = np.repeat(batch.exercise_ids[:, last:], batch.width, axis=1)
    category_ids = np.repeat(batch.category_ids[:, last:], batch.width, axis=1)
    rows = add(take(tables.exercise_id, exercise_ids),
               take(tables.category, category_ids))
    return add(rows, take(tables.position, np.zeros_like(exercise_ids)))
