"""
Accuracy and AUC, evaluation of checkpoints on dataset splits, export of
attention matrices and the per-exercise mean baseline.
"""

from __future__ import absolute_import
from collections import OrderedDict, namedtuple
import io
import json
import logging
import os
import numpy as np
import pandas as pd
from .attention import ForwardContext
from .constants import AttentionStream, MetricProp, SplitName
from .embeddings import SequenceBatch
from .exceptions import UndefinedMetricError, ValidationError, WindowError

# Configure local logger
logger = logging.getLogger(__name__)

#: A predicted probability with its true label.
ScoredExample = namedtuple("ScoredExample", ["probability", "label"])

#: Directory (below the output directory) receiving attention dumps.
ATTENTION_DIR = "attn"

#: Name of the attention dump index.
ATTENTION_MANIFEST = "manifest.json"


def _check_scored(labels, scores):
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if labels.shape != scores.shape:
        raise ValidationError(
            "Got {} labels but {} scores".format(labels.size, scores.size))
    if labels.size == 0:
        raise ValidationError("No scored examples")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("Labels must be 0 or 1")
    if np.any(np.isnan(scores)):
        raise ValidationError("Scores must not be NaN")
    return labels, scores


def unzip_examples(examples):
    """
    Split :class:`ScoredExample` items into label and score arrays.

    :rtype: tuple
    """
    examples = list(examples)
    labels = np.array([example.label for example in examples],
                      dtype=np.float64)
    scores = np.array([example.probability for example in examples],
                      dtype=np.float64)
    return labels, scores


def auc(labels, scores):
    """
    Area under the ROC curve as the Mann-Whitney statistic: the fraction of
    (positive, negative) pairs in which the positive is scored higher, ties
    counting one half.

    :param labels: Labels in ``{0, 1}``.
    :param scores: Scores, any real values.
    :rtype: float
    :raises UndefinedMetricError: If only one class is present.
    """
    labels, scores = _check_scored(labels, scores)
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError(
            "AUC is undefined with {} positive and {} negative labels".format(
                positives, negatives))
    # Average ranks (1-based) of tied groups
    _, inverse, counts = np.unique(scores, return_inverse=True,
                                   return_counts=True)
    ends = np.cumsum(counts)
    group_ranks = ends - (counts - 1) / 2.0
    ranks = group_ranks[inverse]
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - positives * (positives + 1) / 2.0) / \
        (float(positives) * negatives)


def safe_auc(labels, scores):
    """
    AUC, or `None` (with a warning) when it is undefined.

    :rtype: float
    """
    try:
        return auc(labels, scores)
    except UndefinedMetricError as ex:
        logger.warning("%s", ex)
        return None


def acc(labels, scores, threshold=0.5):
    """
    Fraction of correct predictions, a score at or above the threshold
    predicting a correct response.

    :param labels: Labels in ``{0, 1}``.
    :param scores: Predicted probabilities.
    :param float threshold: Decision threshold.
    :rtype: float
    """
    labels, scores = _check_scored(labels, scores)
    predicted = (scores >= threshold).astype(np.float64)
    return float(np.mean(predicted == labels))


def score_examples(model, examples, batch_size=128):
    """
    Score every target of the windowed examples in evaluation mode.

    :param saintkt.architectures.KnowledgeTracer model: The model.
    :param list examples: :class:`saintkt.data.WindowedExample` items.
    :param int batch_size: Number of examples per forward pass.
    :return: Tuple of label and score arrays, in example order.
    :rtype: tuple
    """
    prepared = model.prepare_examples(examples)
    labels = []
    scores = []
    for start in range(0, len(prepared), batch_size):
        batch = model.make_batch(prepared[start:start + batch_size])
        probabilities = model.forward(batch).data
        batch_labels, mask = model.score_targets(batch)
        labels.append(batch_labels[mask])
        scores.append(probabilities[mask])
    if not labels:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(labels), np.concatenate(scores).astype(np.float64)


class EvaluationResult(object):
    """
    Metrics of a model on one dataset split.
    """

    def __init__(self, split, auc_value, acc_value, n, checkpoint_hash=None):
        self._split = split
        self._auc = auc_value
        self._acc = acc_value
        self._n = n
        self._checkpoint_hash = checkpoint_hash

    @property
    def split(self):
        return self._split

    @property
    def auc(self):
        """
        AUC (`None` if a single class was present)

        :rtype: float
        """
        return self._auc

    @property
    def acc(self):
        return self._acc

    @property
    def n(self):
        """
        Number of scored targets

        :rtype: int
        """
        return self._n

    @property
    def checkpoint_hash(self):
        return self._checkpoint_hash

    def to_dict(self):
        """
        Return a dictionary representation of this result object.

        :return: The dictionary representation
        :rtype: dict
        """
        return OrderedDict([
            (MetricProp.SPLIT, self._split),
            (MetricProp.AUC, self._auc),
            (MetricProp.ACC, self._acc),
            (MetricProp.N, self._n),
            (MetricProp.CHECKPOINT_HASH, self._checkpoint_hash)])


def evaluate(checkpoint, dataset, split=SplitName.TEST):
    """
    Score every target of a split with a checkpoint.

    The dataset is split with the checkpoint's ratios and seed unless it is
    split already. Histories are windowed without overlap.

    :param saintkt.checkpoint.Checkpoint checkpoint: The checkpoint.
    :param saintkt.data.InteractionDataset dataset: The data.
    :param str split: A member of :class:`saintkt.constants.SplitName`.
    :rtype: EvaluationResult
    :raises CompatibilityError: If the vocabularies do not match.
    :raises ValidationError: If the split has no targets.
    """
    checkpoint.check_compatible(dataset.manifest)
    config = checkpoint.config
    if not dataset.is_split:
        dataset = dataset.split(config.ratios, config.seed)
    model = checkpoint.to_model()
    labels, scores = score_examples(
        model, dataset.windowed(split, config.window), config.batch_size)
    if not labels.size:
        raise ValidationError("Split '{}' has no targets".format(split))
    result = EvaluationResult(split, safe_auc(labels, scores),
                              acc(labels, scores), int(labels.size),
                              checkpoint.content_hash())
    logger.info("Evaluated %s split: %s", split, json.dumps(result.to_dict()))
    return result


def exercise_mean_baseline(dataset, split=SplitName.TEST,
                           window_size=100):
    """
    Score a split by the correct rate of each exercise in the training split
    (the overall training correct rate for exercises never seen there).

    :param saintkt.data.InteractionDataset dataset: A split dataset.
    :param str split: Split to score.
    :param int window_size: Window used to select the targets.
    :rtype: EvaluationResult
    """
    num_exercises = dataset.manifest.num_exercises + 1
    correct = np.zeros(num_exercises)
    attempts = np.zeros(num_exercises)
    for history in dataset.split_histories(SplitName.TRAIN):
        for interaction in history:
            attempts[interaction.exercise.exercise_id] += 1
            correct[interaction.exercise.exercise_id] += \
                interaction.response.response
    overall = correct.sum() / attempts.sum() if attempts.sum() else 0.5
    rates = np.where(attempts > 0, correct / np.maximum(attempts, 1), overall)

    labels = []
    scores = []
    for example in dataset.windowed(split, window_size):
        for interaction, is_target in zip(example.interactions,
                                          example.target_mask):
            if is_target:
                labels.append(interaction.response.response)
                scores.append(rates[interaction.exercise.exercise_id])
    if not labels:
        raise ValidationError("Split '{}' has no targets".format(split))
    return EvaluationResult(split, safe_auc(labels, scores),
                            acc(labels, scores), len(labels))


class AttentionDump(object):
    """
    Attention weights of one head of one attention layer.
    """

    def __init__(self, architecture, layer, stream, head, matrix):
        self._architecture = architecture
        self._layer = layer
        self._stream = stream
        self._head = head
        self._matrix = matrix

    @property
    def architecture(self):
        return self._architecture

    @property
    def layer(self):
        return self._layer

    @property
    def stream(self):
        """
        A member of :class:`saintkt.constants.AttentionStream`

        :rtype: str
        """
        return self._stream

    @property
    def head(self):
        return self._head

    @property
    def matrix(self):
        """
        Weights ``[queries, keys]``; each row sums to 1 over its unmasked
        keys and masked entries are 0

        :rtype: numpy.ndarray
        """
        return self._matrix

    @property
    def file_name(self):
        return "{}_{}_{}.csv".format(self._layer, self._stream, self._head)


def attention_dumps(model, sequence):
    """
    Run one evaluation-mode forward pass over a sequence and collect the
    attention weights of every layer and head.

    :param saintkt.architectures.KnowledgeTracer model: The model.
    :param list sequence: :class:`saintkt.embeddings.Interaction` items,
        oldest first; the last one is the prediction target.
    :rtype: list
    """
    window = model.config.window
    if not 1 <= len(sequence) <= window:
        raise WindowError(
            "Sequence length must be in [1, {}], got {}".format(
                window, len(sequence)))
    context = ForwardContext(record_attention=True)
    model.forward(SequenceBatch.from_sequences([list(sequence)]), context)
    order = {stream: rank for rank, stream in enumerate(AttentionStream.ALL)}
    dumps = []
    for (layer, stream) in sorted(context.attention,
                                  key=lambda key: (order[key[1]], key[0])):
        weights = context.attention[(layer, stream)][0]
        for head in range(weights.shape[0]):
            dumps.append(AttentionDump(model.architecture, layer, stream,
                                       head, weights[head]))
    return dumps


def export_attention(checkpoint, sequence, out_dir):
    """
    Write the attention weights of a forward pass over `sequence` as one CSV
    matrix per (layer, stream, head) under ``<out_dir>/attn`` together with
    an index ``manifest.json``.

    :param saintkt.checkpoint.Checkpoint checkpoint: The checkpoint.
    :param list sequence: :class:`saintkt.embeddings.Interaction` items.
    :param str out_dir: Output directory.
    :return: The dumps written.
    :rtype: list
    """
    dumps = attention_dumps(checkpoint.to_model(), sequence)
    target_dir = os.path.join(out_dir, ATTENTION_DIR)
    if not os.path.isdir(target_dir):
        os.makedirs(target_dir)
    for dump in dumps:
        pd.DataFrame(dump.matrix).to_csv(
            os.path.join(target_dir, dump.file_name), header=False,
            index=False, float_format="%.17g", lineterminator="\n")
    index = OrderedDict([
        ("architecture", checkpoint.config.architecture),
        (MetricProp.CHECKPOINT_HASH, checkpoint.content_hash()),
        ("sequence", [OrderedDict([
            ("exercise_id", interaction.exercise.exercise_id),
            ("category_id", interaction.exercise.category_id),
            ("response", interaction.response.response)])
                      for interaction in sequence]),
        ("dumps", [OrderedDict([
            ("file", dump.file_name),
            ("layer", dump.layer),
            ("stream", dump.stream),
            ("head", dump.head),
            ("shape", list(dump.matrix.shape))]) for dump in dumps])])
    with io.open(os.path.join(target_dir, ATTENTION_MANIFEST), "w",
                 encoding="utf-8") as handle:
        handle.write(json.dumps(index, indent=2) + "\n")
    logger.info("Wrote %d attention matrices to %s", len(dumps), target_dir)
    return dumps
