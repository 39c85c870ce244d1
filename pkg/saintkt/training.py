"""
Loss, optimizer, learning rate schedule and the training loop.
"""

from __future__ import absolute_import
from collections import OrderedDict
import io
import json
import logging
import math
import threading
import numpy as np
import pandas as pd
from .architectures import KnowledgeTracer
from .attention import ForwardContext
from .checkpoint import Checkpoint
from .constants import Architecture, EmbeddingDetail, MetricProp, SplitName
from .evaluation import (acc, evaluate, exercise_mean_baseline, safe_auc,
                         score_examples)
from .exceptions import (NumericalError, TrainingDivergedError,
                         ValidationError)
from .numerics import (RngStream, clip, log, multiply, reduce_sum, scale,
                       subtract)

# Configure local logger
logger = logging.getLogger(__name__)

#: Probabilities are clamped into ``[eps, 1 - eps]`` inside the loss.
LOSS_EPSILON = 1e-7


def bce_loss(predictions, targets, mask):
    """
    Binary cross-entropy averaged over the masked positions,
    ``-[y log p + (1 - y) log(1 - p)]`` with ``p`` clamped away from 0
    and 1.

    :param saintkt.numerics.Tensor predictions: Probabilities.
    :param numpy.ndarray targets: Labels in ``{0, 1}``, same shape.
    :param numpy.ndarray mask: Boolean array of the positions to average.
    :return: Scalar tensor.
    :rtype: saintkt.numerics.Tensor
    :raises ValidationError: If the mask selects nothing.
    """
    targets = np.asarray(targets, dtype=predictions.dtype)
    mask = np.asarray(mask, dtype=bool)
    if targets.shape != predictions.shape or mask.shape != predictions.shape:
        raise ValidationError(
            "Predictions {}, targets {} and mask {} must have the same "
            "shape".format(predictions.shape, targets.shape, mask.shape))
    count = int(mask.sum())
    if count == 0:
        raise ValidationError("Loss mask selects no positions")
    clamped = clip(predictions, LOSS_EPSILON, 1.0 - LOSS_EPSILON)
    weights = mask.astype(predictions.dtype)
    positive = multiply(log(clamped), targets * weights)
    negative = multiply(log(subtract(1.0, clamped)),
                        (1.0 - targets) * weights)
    return scale(reduce_sum(positive) + reduce_sum(negative), -1.0 / count)


def noam_lr(step, d_model, warmup, peak_lr):  # pylint: disable=unused-argument
    """
    Noam learning rate, renormalized so that its maximum, reached at
    ``step == warmup``, equals `peak_lr`:
    ``peak_lr * min(step / warmup, sqrt(warmup / step))``.

    The ``d_model ** -0.5`` factor of the original schedule cancels out in
    the renormalization, so `d_model` does not change the result.

    :param int step: Optimizer step, starting at 1.
    :param int d_model: Model width.
    :param int warmup: Number of warmup steps.
    :param float peak_lr: Largest learning rate.
    :rtype: float
    :raises ValidationError: If the step or warmup is below 1.
    """
    if step < 1 or warmup < 1:
        raise ValidationError(
            "Step and warmup must be at least 1, got {} and {}".format(
                step, warmup))
    return peak_lr * min(float(step) / warmup, math.sqrt(float(warmup) / step))


class OptimizerState(object):
    """
    Adam moment estimates of each parameter plus the step counter.
    """

    def __init__(self, named_parameters):
        self._first = OrderedDict(
            (name, np.zeros_like(tensor.data))
            for name, tensor in named_parameters.items())
        self._second = OrderedDict(
            (name, np.zeros_like(tensor.data))
            for name, tensor in named_parameters.items())
        self._step = 0

    @property
    def first_moments(self):
        return self._first

    @property
    def second_moments(self):
        return self._second

    @property
    def step(self):
        """
        Number of updates applied so far

        :rtype: int
        """
        return self._step

    def advance(self):
        self._step += 1
        return self._step


def adam_step(named_parameters, grads, state, lr, beta1=0.9, beta2=0.999,
              epsilon=1e-8):
    """
    Apply one bias-corrected Adam update in place.

    :param dict named_parameters: Parameter tensors keyed by name.
    :param dict grads: Gradient arrays keyed by name (missing or `None`
        gradients count as zero).
    :param OptimizerState state: Moment estimates, updated in place.
    :param float lr: Learning rate.
    :raises NumericalError: If a gradient is not finite; nothing is updated.
    """
    for name in named_parameters:
        grad = grads.get(name)
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NumericalError(
                "Non-finite gradient for parameter '{}' at step {}".format(
                    name, state.step + 1))
    step = state.advance()
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    for name, tensor in named_parameters.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        first = state.first_moments[name]
        second = state.second_moments[name]
        first *= beta1
        first += (1.0 - beta1) * grad
        second *= beta2
        second += (1.0 - beta2) * grad * grad
        update = lr * (first / correction1) / \
            (np.sqrt(second / correction2) + epsilon)
        tensor.data = (tensor.data - update).astype(tensor.dtype)


def clip_gradients(parameters, max_norm):
    """
    Scale the gradients of `parameters` in place so that their global
    Euclidean norm does not exceed `max_norm`.

    :param list parameters: Tensors whose gradients to clip.
    :param float max_norm: Largest allowed norm; 0 disables clipping.
    :return: The norm before clipping.
    :rtype: float
    """
    grads = [tensor.grad for tensor in parameters if tensor.grad is not None]
    total = math.sqrt(sum(float(np.sum(grad * grad)) for grad in grads))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for tensor in parameters:
            if tensor.grad is not None:
                tensor.grad = tensor.grad * factor
    return total


class AdamOptimizer(object):
    """
    Adam over the parameters of a model. Updates are serialized by a lock.
    """

    def __init__(self, named_parameters, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        self._parameters = OrderedDict(named_parameters)
        self._state = OptimizerState(self._parameters)
        self._beta1 = beta1
        self._beta2 = beta2
        self._epsilon = epsilon
        self._lock = threading.RLock()

    @property
    def state(self):
        return self._state

    def step(self, lr):
        """
        Update every parameter from its current gradient.

        :param float lr: Learning rate.
        """
        with self._lock:
            grads = OrderedDict((name, tensor.grad) for name, tensor
                                in self._parameters.items())
            adam_step(self._parameters, grads, self._state, lr, self._beta1,
                      self._beta2, self._epsilon)


class TrainResult(object):
    """
    Outcome of a training run: the checkpoint with the best validation AUC
    and the per-epoch metric history.
    """

    def __init__(self, checkpoint, history, best_epoch):
        self._checkpoint = checkpoint
        self._history = history
        self._best_epoch = best_epoch

    @property
    def checkpoint(self):
        """
        Checkpoint of the selected epoch

        :rtype: saintkt.checkpoint.Checkpoint
        """
        return self._checkpoint

    @property
    def history(self):
        """
        One metric dictionary per epoch, as written to the training log

        :rtype: list
        """
        return self._history

    @property
    def best_epoch(self):
        return self._best_epoch


def _batches(examples, batch_size):
    for start in range(0, len(examples), batch_size):
        yield examples[start:start + batch_size]


def _validation_metrics(model, examples, batch_size):
    labels, scores = score_examples(model, examples, batch_size)
    if not len(labels):
        return None, None
    return safe_auc(labels, scores), acc(labels, scores)


class _TrainingLog(object):
    """
    Writes one JSON line per epoch and echoes it to the logger.
    """

    def __init__(self, path):
        self._path = path
        if path:
            io.open(path, "w", encoding="utf-8").close()

    def append(self, entry):
        line = json.dumps(entry)
        logger.info("Epoch %s", line)
        if self._path:
            with io.open(self._path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")


def train(config, dataset, log_path=None):
    """
    Train a model and keep the parameters with the best validation AUC.

    The dataset is split with the configured ratios and seed unless it is
    split already. Each epoch shuffles the windowed training examples with a
    seeded stream, takes one Adam step per batch at the Noam learning rate
    and then evaluates on the validation split. Training stops after
    `max_epochs`, after `max_steps` optimizer steps, or once `patience`
    epochs pass without a better validation AUC.

    :param saintkt.config.TrainConfig config: Hyperparameters.
    :param saintkt.data.InteractionDataset dataset: The data.
    :param str log_path: Optional path of the per-epoch JSON lines log.
    :rtype: TrainResult
    :raises ValidationError: If the training or validation split is empty.
    :raises TrainingDivergedError: If a loss or gradient becomes non-finite.
    """
    if not dataset.is_split:
        dataset = dataset.split(config.ratios, config.seed)
    manifest = dataset.manifest
    model = KnowledgeTracer.create(config, manifest.num_exercises,
                                   manifest.num_categories)
    train_examples = model.prepare_examples(dataset.windowed(
        SplitName.TRAIN, config.window, config.window_stride))
    val_examples = model.prepare_examples(dataset.windowed(
        SplitName.VALIDATION, config.window))
    if not train_examples or not val_examples:
        raise ValidationError(
            "Training needs nonempty train and validation splits (got {} and "
            "{} examples)".format(len(train_examples), len(val_examples)))
    logger.info("Training %s (N=%d, d_model=%d, detail %s) on %d examples, "
                "validating on %d", config.architecture, config.num_layers,
                config.d_model, config.embedding_detail, len(train_examples),
                len(val_examples))

    rng = RngStream(config.seed)
    shuffle_rng = rng.child("shuffle")
    context = ForwardContext(train=True, dropout_rate=config.dropout,
                             rng=rng.child("dropout"),
                             attention_dropout=config.attention_dropout)
    parameters = model.params.named_parameters()
    optimizer = AdamOptimizer(parameters, config.beta1, config.beta2,
                              config.epsilon)
    training_log = _TrainingLog(log_path)

    history = []
    best = None
    best_auc = None
    best_epoch = None
    stale_epochs = 0
    step = 0
    lr = 0.0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.generator.permutation(len(train_examples))
        shuffled = [train_examples[i] for i in order]
        losses = []
        for examples in _batches(shuffled, config.batch_size):
            if config.max_steps and step >= config.max_steps:
                break
            step += 1
            lr = noam_lr(step, config.d_model, config.warmup_steps,
                         config.peak_lr)
            batch = model.make_batch(examples)
            try:
                probabilities = model.forward(batch, context)
                labels, mask = model.loss_targets(batch)
                loss = bce_loss(probabilities, labels, mask)
                model.params.zero_grad()
                loss.backward()
                norm = clip_gradients(list(parameters.values()),
                                      config.clip_norm)
                optimizer.step(lr)
            except NumericalError as ex:
                last_good = best or Checkpoint.from_model(model, manifest)
                raise TrainingDivergedError(
                    "Training diverged at epoch {}, step {}: {}".format(
                        epoch, step, ex), last_good, history)
            losses.append(loss.item())
            logger.debug("Step %d: lr %.6g, loss %.6f, gradient norm %.4f",
                         step, lr, losses[-1], norm)
        if not losses:
            break

        val_auc, val_acc = _validation_metrics(model, val_examples,
                                               config.batch_size)
        entry = OrderedDict([
            (MetricProp.EPOCH, epoch),
            (MetricProp.STEP, step),
            (MetricProp.LR, lr),
            (MetricProp.TRAIN_LOSS, float(np.mean(losses))),
            (MetricProp.VAL_AUC, val_auc),
            (MetricProp.VAL_ACC, val_acc)])
        history.append(entry)
        training_log.append(entry)

        if best is None or (val_auc is not None and
                            (best_auc is None or val_auc > best_auc)):
            best = Checkpoint.from_model(model, manifest)
            best_auc = val_auc
            best_epoch = epoch
            stale_epochs = 0
            logger.info("New best validation AUC %s at epoch %d", val_auc,
                        epoch)
        else:
            stale_epochs += 1
            if config.patience and stale_epochs >= config.patience:
                logger.info("No validation improvement for %d epochs, "
                            "stopping", stale_epochs)
                break
        if config.max_steps and step >= config.max_steps:
            break
    return TrainResult(best, history, best_epoch)


#: Architecture label of the baseline row of an ablation table.
BASELINE_LABEL = "EXERCISE_MEAN"

ABLATION_COLUMNS = ["architecture", "embedding_detail", "num_layers",
                    "d_model", "best_epoch", "val_auc", "test_auc", "test_acc",
                    "test_n"]


def run_ablation(config, dataset, num_layers=(2, 3, 4), d_models=(256, 512),
                 architectures=Architecture.ALL,
                 details=EmbeddingDetail.ALL, out_path=None):
    """
    Train and test every combination of architecture, embedding detail,
    depth and width, plus the per-exercise mean baseline.

    :param saintkt.config.TrainConfig config: Base hyperparameters.
    :param saintkt.data.InteractionDataset dataset: The data.
    :param tuple num_layers: Depths to try.
    :param tuple d_models: Widths to try (each must be divisible by the head
        count).
    :param tuple architectures: Architectures to try.
    :param tuple details: Embedding detail levels to try.
    :param str out_path: Optional CSV path for the table.
    :return: One row per trained model plus the baseline row.
    :rtype: pandas.DataFrame
    """
    if not dataset.is_split:
        dataset = dataset.split(config.ratios, config.seed)
    rows = []
    for architecture in architectures:
        for detail in details:
            for layers in num_layers:
                for d_model in d_models:
                    cell = config.replace(architecture=architecture,
                                          embedding_detail=detail,
                                          num_layers=layers, d_model=d_model)
                    logger.info("Ablation cell: %s, detail %s, N=%d, "
                                "d_model=%d", architecture, detail, layers,
                                d_model)
                    result = train(cell, dataset)
                    test = evaluate(result.checkpoint, dataset,
                                    SplitName.TEST)
                    val_auc = None
                    if result.best_epoch is not None:
                        val_auc = result.history[result.best_epoch - 1][
                            MetricProp.VAL_AUC]
                    rows.append([architecture, detail, layers, d_model,
                                 result.best_epoch, val_auc, test.auc,
                                 test.acc, test.n])
    baseline = exercise_mean_baseline(dataset, SplitName.TEST, config.window)
    rows.append([BASELINE_LABEL, None, None, None, None, None, baseline.auc,
                 baseline.acc, baseline.n])
    table = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    if out_path:
        table.to_csv(out_path, index=False, lineterminator="\n")
        logger.info("Wrote ablation table to %s", out_path)
    return table
