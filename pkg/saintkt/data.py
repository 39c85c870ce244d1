"""
Interaction log ingestion, per-user splitting, windowing and the synthetic
dataset generator.

Interaction logs are UTF-8 CSV files with the header
``user_id,timestamp,exercise_id,category_id,response,elapsed_seconds``, the
timestamp in epoch milliseconds.
"""

from __future__ import absolute_import
from collections import OrderedDict, namedtuple
import hashlib
import io
import json
import logging
import math
import re
import numpy as np
import pandas as pd
from .constants import CsvColumn, ManifestProp, SplitName
from .embeddings import (ExerciseInfo, Interaction, ResponseInfo,
                         SequenceBatch)
from .exceptions import ParseError, ValidationError
from .numerics import RngStream

# Configure local logger
logger = logging.getLogger(__name__)

#: Version of the manifest document layout.
MANIFEST_SCHEMA_VERSION = 1

#: Default number of interactions per window.
DEFAULT_WINDOW = 100

#: Default split ratios (train, validation, test).
DEFAULT_RATIOS = (0.7, 0.1, 0.2)

#: Start of the synthetic timelines, 2019-01-01T00:00:00Z.
SYNTHETIC_START_MS = 1546300800000

#: One record of an interaction log, with raw (not densified) ids.
RawRecord = namedtuple("RawRecord", list(CsvColumn.ALL))

_INTEGER_PATTERN = re.compile(r"^-?\d+$")
_PARSER_LINE_PATTERN = re.compile(r"\bline (\d+)")

# Largest magnitude of an epoch millisecond timestamp pandas can represent
_MAX_TIMESTAMP_MS = min(pd.Timestamp.max.value, -pd.Timestamp.min.value) // \
    1000000


def _vocabulary_order(values):
    """
    Sort raw ids numerically when they are all integers, lexicographically
    otherwise.
    """
    values = list(values)
    if all(_INTEGER_PATTERN.match(value) for value in values):
        return sorted(values, key=int)
    return sorted(values)


def _sha256(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _canonical_json(document):
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


class DatasetManifest(object):
    """
    Summary of a dataset: vocabularies, user and response counts (overall
    and per split) and the content hash of the interaction log.
    """

    def __init__(self, exercise_ids, category_ids, exercise_categories,
                 num_users, num_responses, content_hash, splits=None):
        self._exercise_ids = list(exercise_ids)
        self._category_ids = list(category_ids)
        self._exercise_categories = [int(c) for c in exercise_categories]
        self._num_users = int(num_users)
        self._num_responses = int(num_responses)
        self._content_hash = content_hash
        self._splits = OrderedDict(splits or ())
        self._exercise_index = {raw: i for i, raw in
                                enumerate(self._exercise_ids)}
        self._category_index = {raw: i for i, raw in
                                enumerate(self._category_ids)}

    @property
    def num_exercises(self):
        """
        Size of the exercise vocabulary

        :rtype: int
        """
        return len(self._exercise_ids)

    @property
    def num_categories(self):
        return len(self._category_ids)

    @property
    def num_users(self):
        return self._num_users

    @property
    def num_responses(self):
        return self._num_responses

    @property
    def exercise_ids(self):
        """
        Raw exercise ids in dense order

        :rtype: list
        """
        return self._exercise_ids

    @property
    def category_ids(self):
        """
        Raw category ids in dense order

        :rtype: list
        """
        return self._category_ids

    @property
    def exercise_categories(self):
        """
        Dense category of each dense exercise id (first observed)

        :rtype: list
        """
        return self._exercise_categories

    @property
    def content_hash(self):
        """
        SHA-256 of the canonical interaction log

        :rtype: str
        """
        return self._content_hash

    @property
    def splits(self):
        """
        ``{users, responses}`` counts keyed by split name (empty before the
        dataset is split)

        :rtype: collections.OrderedDict
        """
        return self._splits

    def exercise_index(self, raw_id):
        """
        Dense id of a raw exercise id (`None` if out of vocabulary).

        :rtype: int
        """
        return self._exercise_index.get(raw_id)

    def category_index(self, raw_id):
        return self._category_index.get(raw_id)

    def vocabulary_hash(self):
        """
        SHA-256 of the vocabularies, which is what a trained model depends
        on.

        :rtype: str
        """
        return _sha256(_canonical_json({
            ManifestProp.EXERCISE_IDS: self._exercise_ids,
            ManifestProp.CATEGORY_IDS: self._category_ids,
            ManifestProp.EXERCISE_CATEGORIES: self._exercise_categories}))

    def with_splits(self, splits):
        return DatasetManifest(self._exercise_ids, self._category_ids,
                               self._exercise_categories, self._num_users,
                               self._num_responses, self._content_hash, splits)

    def to_dict(self):
        """
        Return a dictionary representation of this manifest.

        :return: The dictionary representation
        :rtype: dict
        """
        return OrderedDict([
            (ManifestProp.SCHEMA_VERSION, MANIFEST_SCHEMA_VERSION),
            (ManifestProp.NUM_EXERCISES, self.num_exercises),
            (ManifestProp.NUM_CATEGORIES, self.num_categories),
            (ManifestProp.NUM_USERS, self._num_users),
            (ManifestProp.NUM_RESPONSES, self._num_responses),
            (ManifestProp.SPLITS, OrderedDict(
                (name, OrderedDict(counts))
                for name, counts in self._splits.items())),
            (ManifestProp.EXERCISE_IDS, self._exercise_ids),
            (ManifestProp.CATEGORY_IDS, self._category_ids),
            (ManifestProp.EXERCISE_CATEGORIES, self._exercise_categories),
            (ManifestProp.CONTENT_HASH, self._content_hash)])

    @staticmethod
    def from_dict(document):
        """
        Create a manifest from its dictionary representation.

        :param dict document: As produced by :meth:`to_dict`.
        :rtype: DatasetManifest
        :raises ValidationError: If the document is not a supported manifest.
        """
        version = document.get(ManifestProp.SCHEMA_VERSION)
        if version != MANIFEST_SCHEMA_VERSION:
            raise ValidationError(
                "Unsupported manifest schema version: {}".format(version))
        try:
            return DatasetManifest(
                document[ManifestProp.EXERCISE_IDS],
                document[ManifestProp.CATEGORY_IDS],
                document[ManifestProp.EXERCISE_CATEGORIES],
                document[ManifestProp.NUM_USERS],
                document[ManifestProp.NUM_RESPONSES],
                document[ManifestProp.CONTENT_HASH],
                OrderedDict(document.get(ManifestProp.SPLITS) or ()))
        except KeyError as ex:
            raise ValidationError(
                "Manifest is missing '{}'".format(ex.args[0]))

    def hash(self):
        """
        SHA-256 of the canonical manifest document.

        :rtype: str
        """
        return _sha256(_canonical_json(self.to_dict()))

    def write(self, path):
        with io.open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def read(path):
        with io.open(path, "r", encoding="utf-8") as handle:
            return DatasetManifest.from_dict(json.load(handle))


class InteractionDataset(object):
    """
    Per-user interaction histories (oldest first) with their manifest and,
    once split, the users of each split.
    """

    def __init__(self, histories, manifest, split_assignment=None):
        self._histories = OrderedDict(histories)
        self._manifest = manifest
        self._split_assignment = split_assignment

    @property
    def histories(self):
        """
        Histories keyed by raw user id

        :rtype: collections.OrderedDict
        """
        return self._histories

    @property
    def manifest(self):
        """
        Manifest of the dataset

        :rtype: DatasetManifest
        """
        return self._manifest

    @property
    def users(self):
        return list(self._histories.keys())

    @property
    def is_split(self):
        return self._split_assignment is not None

    def split(self, ratios=DEFAULT_RATIOS, seed=0):
        """
        Assign every user to a split.

        :param tuple ratios: Train, validation and test ratios.
        :param int seed: Seed of the assignment.
        :return: A dataset carrying the assignment and per-split counts.
        :rtype: InteractionDataset
        """
        train, val, test = split_users(self._histories, ratios, seed)
        assignment = OrderedDict([(SplitName.TRAIN, train),
                                  (SplitName.VALIDATION, val),
                                  (SplitName.TEST, test)])
        counts = OrderedDict()
        for name, users in assignment.items():
            counts[name] = OrderedDict([
                (ManifestProp.USERS, len(users)),
                (ManifestProp.RESPONSES,
                 sum(len(self._histories[user]) for user in users))])
        logger.info("Split %d users into %s", len(self._histories),
                    ", ".join("{} {}".format(name, len(users))
                              for name, users in assignment.items()))
        return InteractionDataset(self._histories,
                                  self._manifest.with_splits(counts),
                                  assignment)

    def split_users(self, name):
        """
        Users of a split.

        :param str name: A member of :class:`saintkt.constants.SplitName`.
        :rtype: list
        :raises ValidationError: If the dataset is not split or the name is
            unknown.
        """
        if self._split_assignment is None:
            raise ValidationError("Dataset has not been split")
        if name not in self._split_assignment:
            raise ValidationError("Unknown split: '{}'".format(name))
        return self._split_assignment[name]

    def split_histories(self, name):
        return [self._histories[user] for user in self.split_users(name)]

    def windowed(self, name, window_size=DEFAULT_WINDOW, stride=None):
        """
        Windowed examples of all histories of a split.

        :rtype: list
        """
        examples = []
        for history in self.split_histories(name):
            examples.extend(window(history, window_size, stride))
        return examples

    def exercise_info(self, raw_exercise_id, raw_category_id=None):
        """
        Map raw ids to an :class:`saintkt.embeddings.ExerciseInfo`. Unknown
        ids map to the out-of-vocabulary rows; a missing category falls back
        to the exercise's first observed category.

        :rtype: saintkt.embeddings.ExerciseInfo
        """
        return lookup_exercise(self._manifest, raw_exercise_id,
                              raw_category_id)


def lookup_exercise(manifest, raw_exercise_id, raw_category_id=None):
    exercise = manifest.exercise_index(raw_exercise_id)
    if exercise is None:
        logger.warning("Exercise id '%s' is not in the vocabulary",
                       raw_exercise_id)
        exercise = manifest.num_exercises
    if raw_category_id is None:
        category = manifest.exercise_categories[exercise] \
            if exercise < manifest.num_exercises else manifest.num_categories
    else:
        category = manifest.category_index(raw_category_id)
        if category is None:
            logger.warning("Category id '%s' is not in the vocabulary",
                           raw_category_id)
            category = manifest.num_categories
    return ExerciseInfo(exercise, category)


def _format_elapsed(value):
    return repr(float(value))


def _check_frame(frame):
    """
    Validate the raw string frame and convert it to canonical form.
    """
    line_numbers = frame.index.to_numpy() + 2
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        raise ParseError("Missing field", int(line_numbers[missing.argmax()]))

    timestamps = pd.to_numeric(frame[CsvColumn.TIMESTAMP], errors="coerce")
    bad = (timestamps.isna() | (timestamps != np.floor(timestamps))).to_numpy()
    if bad.any():
        raise ParseError("Timestamp must be integer epoch milliseconds",
                         int(line_numbers[bad.argmax()]))
    bad = (timestamps.abs() > _MAX_TIMESTAMP_MS).to_numpy()
    if bad.any():
        raise ParseError("Timestamp is out of range",
                         int(line_numbers[bad.argmax()]))

    responses = pd.to_numeric(frame[CsvColumn.RESPONSE], errors="coerce")
    bad = responses.isna().to_numpy()
    if bad.any():
        raise ParseError("Response is not a number",
                         int(line_numbers[bad.argmax()]))
    bad = (~responses.isin([0, 1])).to_numpy()
    if bad.any():
        row = bad.argmax()
        raise ValidationError(
            "Line {}: Response must be 0 or 1, got {}".format(
                int(line_numbers[row]), frame[CsvColumn.RESPONSE].iloc[row]))

    elapsed = pd.to_numeric(frame[CsvColumn.ELAPSED_SECONDS], errors="coerce")
    bad = elapsed.isna().to_numpy()
    if bad.any():
        raise ParseError("Elapsed time is not a number",
                         int(line_numbers[bad.argmax()]))
    bad = (elapsed < 0).to_numpy() | ~np.isfinite(elapsed.to_numpy())
    if bad.any():
        row = bad.argmax()
        raise ValidationError(
            "Line {}: Elapsed time must be nonnegative, got {}".format(
                int(line_numbers[row]),
                frame[CsvColumn.ELAPSED_SECONDS].iloc[row]))

    return pd.DataFrame(OrderedDict([
        (CsvColumn.USER_ID, frame[CsvColumn.USER_ID].astype(str)),
        (CsvColumn.TIMESTAMP, timestamps.astype(np.int64)),
        (CsvColumn.EXERCISE_ID, frame[CsvColumn.EXERCISE_ID].astype(str)),
        (CsvColumn.CATEGORY_ID, frame[CsvColumn.CATEGORY_ID].astype(str)),
        (CsvColumn.RESPONSE, responses.astype(np.int64)),
        (CsvColumn.ELAPSED_SECONDS, elapsed.astype(np.float64))]))


def _frame_to_csv(frame, path_or_buffer=None):
    text = frame.assign(**{
        CsvColumn.ELAPSED_SECONDS:
            frame[CsvColumn.ELAPSED_SECONDS].map(_format_elapsed)}).to_csv(
                path_or_buffer, index=False, lineterminator="\n")
    return text


def _sort_frame(frame):
    """
    Order rows by user (numeric-aware) then timestamp, keeping the original
    order of equal timestamps.
    """
    user_order = {user: rank for rank, user in enumerate(
        _vocabulary_order(frame[CsvColumn.USER_ID].unique()))}
    frame = frame.assign(_user_rank=frame[CsvColumn.USER_ID].map(user_order))
    frame = frame.sort_values(["_user_rank", CsvColumn.TIMESTAMP],
                              kind="mergesort")
    return frame.drop(columns=["_user_rank"]).reset_index(drop=True)


def _build_dataset(frame, manifest=None):
    """
    Densify ids, group the canonical frame by user and build the manifest.
    """
    frame = _sort_frame(frame)
    content_hash = _sha256(_frame_to_csv(frame))

    if manifest is None:
        exercise_ids = _vocabulary_order(frame[CsvColumn.EXERCISE_ID].unique())
        category_ids = _vocabulary_order(frame[CsvColumn.CATEGORY_ID].unique())
        exercise_index = {raw: i for i, raw in enumerate(exercise_ids)}
        category_index = {raw: i for i, raw in enumerate(category_ids)}
        firsts = frame.drop_duplicates(CsvColumn.EXERCISE_ID)
        first_category = dict(zip(firsts[CsvColumn.EXERCISE_ID],
                                  firsts[CsvColumn.CATEGORY_ID]))
        exercise_categories = [category_index[first_category[raw]]
                               for raw in exercise_ids]
    else:
        exercise_ids = manifest.exercise_ids
        category_ids = manifest.category_ids
        exercise_categories = manifest.exercise_categories
        exercise_index = {raw: i for i, raw in enumerate(exercise_ids)}
        category_index = {raw: i for i, raw in enumerate(category_ids)}

    exercises = frame[CsvColumn.EXERCISE_ID].map(exercise_index)
    categories = frame[CsvColumn.CATEGORY_ID].map(category_index)
    unknown = int(exercises.isna().sum())
    if unknown:
        logger.warning("Mapped %d interactions with unknown exercise ids to "
                       "the out-of-vocabulary row", unknown)
    exercises = exercises.fillna(len(exercise_ids)).astype(np.int64)
    categories = categories.fillna(len(category_ids)).astype(np.int64)

    moments = pd.to_datetime(frame[CsvColumn.TIMESTAMP], unit="ms", utc=True)
    months = moments.dt.month.to_numpy()
    days = moments.dt.day.to_numpy()
    hours = moments.dt.hour.to_numpy()

    histories = OrderedDict()
    columns = zip(frame[CsvColumn.USER_ID], frame[CsvColumn.TIMESTAMP],
                  exercises, categories, frame[CsvColumn.RESPONSE],
                  frame[CsvColumn.ELAPSED_SECONDS], months, days, hours)
    for user, stamp, exercise, category, response, elapsed, month, day, hour \
            in columns:
        histories.setdefault(user, []).append(Interaction(
            ExerciseInfo(int(exercise), int(category)),
            ResponseInfo(int(response), float(elapsed),
                         (int(month), int(day), int(hour))),
            int(stamp)))

    result = DatasetManifest(exercise_ids, category_ids, exercise_categories,
                             len(histories), len(frame), content_hash)
    logger.info("Loaded %d responses of %d users (%d exercises, %d "
                "categories)", result.num_responses, result.num_users,
                result.num_exercises, result.num_categories)
    return InteractionDataset(histories, result)


def _empty_frame():
    return pd.DataFrame({column: pd.Series(dtype=str)
                         for column in CsvColumn.ALL})


def parse_log(source, manifest=None):
    """
    Parse an interaction log into per-user histories.

    Histories are grouped by user and sorted by timestamp (stable for equal
    timestamps). Raw ids are densified in numeric order when they are all
    integers and lexicographic order otherwise, unless an existing manifest
    supplies the vocabularies, in which case unknown ids map to the
    out-of-vocabulary rows.

    :param source: Path or text file object of the CSV log.
    :param DatasetManifest manifest: Optional vocabulary source.
    :return: The dataset.
    :rtype: InteractionDataset
    :raises ParseError: If the header or a row is malformed.
    :raises ValidationError: If a response is not binary or an elapsed time
        is negative.
    """
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False,
                            na_values=[""], skip_blank_lines=False,
                            encoding="utf-8")
    except pd.errors.EmptyDataError:
        frame = _empty_frame()
    except pd.errors.ParserError as ex:
        match = _PARSER_LINE_PATTERN.search(str(ex))
        raise ParseError("Malformed CSV: {}".format(ex),
                         int(match.group(1)) if match else None)
    except UnicodeDecodeError as ex:
        raise ParseError("Log is not valid UTF-8: {}".format(ex))

    if tuple(frame.columns) != CsvColumn.ALL:
        raise ParseError(
            "Header must be '{}', got '{}'".format(
                ",".join(CsvColumn.ALL), ",".join(frame.columns)), 1)
    return _build_dataset(_check_frame(frame), manifest)


def _dataset_frame(dataset):
    manifest = dataset.manifest
    rows = []
    for user, history in dataset.histories.items():
        for interaction in history:
            exercise = interaction.exercise
            if exercise.exercise_id >= manifest.num_exercises or \
                    exercise.category_id >= manifest.num_categories:
                raise ValidationError(
                    "Cannot write out-of-vocabulary interactions")
            rows.append((user, interaction.timestamp_ms,
                         manifest.exercise_ids[exercise.exercise_id],
                         manifest.category_ids[exercise.category_id],
                         interaction.response.response,
                         interaction.response.elapsed_seconds))
    if not rows:
        return _empty_frame()
    return pd.DataFrame(rows, columns=list(CsvColumn.ALL))


def write_log(dataset, path):
    """
    Write a dataset as an interaction log. Parsing the written file yields
    the same histories and content hash.

    :param InteractionDataset dataset: The dataset.
    :param str path: Destination file.
    """
    frame = _dataset_frame(dataset)
    if len(frame):
        frame = _sort_frame(frame)
        _frame_to_csv(frame, path)
    else:
        frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("Wrote %d responses to %s", len(frame), path)


def _user_rank_key(user, seed):
    return _sha256("{}:{}".format(seed, user))


def split_users(histories, ratios=DEFAULT_RATIOS, seed=0):
    """
    Partition users into train, validation and test sets.

    Users are ranked by the SHA-256 of their id and the seed; the first
    ranks go to train, then validation, then test, with split sizes given
    by the largest-remainder rounding of the ratios. The result depends only
    on the user set, the ratios and the seed.

    Split sizes are exact, so the assignment is not fully stable when the
    user set grows: a new user shifts the ranks after it and may move the
    split boundaries, so at most one existing user per boundary changes
    split for each user added.

    :param histories: Mapping or iterable of user ids.
    :param tuple ratios: Three positive ratios summing to 1.
    :param int seed: Seed of the assignment.
    :return: Tuple of three user lists, each in input order.
    :rtype: tuple
    :raises ValidationError: If the ratios are not three positive values
        summing to 1.
    """
    ratios = tuple(float(ratio) for ratio in ratios)
    if len(ratios) != 3 or any(ratio <= 0 for ratio in ratios) or \
            abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(
            "Split ratios must be three positive values summing to 1, got "
            "{}".format(ratios))
    users = list(histories)
    if len(set(users)) != len(users):
        raise ValidationError("User ids must be unique")

    total = len(users)
    exact = [ratio * total for ratio in ratios]
    counts = [int(math.floor(value + 1e-9)) for value in exact]
    remainders = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in remainders[:total - sum(counts)]:
        counts[i] += 1

    ranked = sorted(users, key=lambda user: _user_rank_key(user, seed))
    bounds = [counts[0], counts[0] + counts[1]]
    rank_of = {user: rank for rank, user in enumerate(ranked)}
    parts = ([], [], [])
    for user in users:
        rank = rank_of[user]
        part = 0 if rank < bounds[0] else (1 if rank < bounds[1] else 2)
        parts[part].append(user)
    return parts


class WindowedExample(object):
    """
    Up to `window` consecutive interactions of one user, with the mask of
    those which are prediction targets.
    """

    def __init__(self, interactions, target_mask, window=DEFAULT_WINDOW):
        if len(interactions) > window:
            raise ValidationError(
                "Example of {} interactions exceeds window {}".format(
                    len(interactions), window))
        if len(target_mask) != len(interactions):
            raise ValidationError("Target mask length does not match")
        self._interactions = list(interactions)
        self._target_mask = [bool(flag) for flag in target_mask]
        self._window = window

    @property
    def interactions(self):
        return self._interactions

    @property
    def target_mask(self):
        """
        Flags marking the interactions whose responses are targets

        :rtype: list
        """
        return self._target_mask

    @property
    def window(self):
        return self._window

    @property
    def pad_length(self):
        """
        Number of pad slots in front of the interactions when padded to the
        full window

        :rtype: int
        """
        return self._window - len(self._interactions)

    @property
    def num_targets(self):
        return sum(self._target_mask)


def window(history, window=DEFAULT_WINDOW, stride=None):
    """
    Slice a history into examples of at most `window` interactions.

    A history no longer than the window yields one example. Longer histories
    yield full-length windows starting every `stride` interactions, the last
    one aligned with the end of the history. Each interaction is a target in
    exactly one window: the first that contains it.

    :param list history: Interactions, oldest first.
    :param int window: Window size, at least 1.
    :param int stride: Distance between window starts, in ``[1, window]``
        (defaults to `window`).
    :return: List of :class:`WindowedExample`.
    :rtype: list
    """
    if window < 1:
        raise ValidationError("Window must be positive, got {}".format(window))
    stride = window if stride is None else stride
    if not 1 <= stride <= window:
        raise ValidationError(
            "Stride must be in [1, {}], got {}".format(window, stride))
    history = list(history)
    length = len(history)
    if length == 0:
        return []
    if length <= window:
        return [WindowedExample(history, [True] * length, window)]

    examples = []
    covered = 0
    start = 0
    while covered < length:
        end = min(start + window, length)
        begin = end - window
        mask = [begin + i >= covered for i in range(window)]
        examples.append(WindowedExample(history[begin:end], mask, window))
        covered = end
        start += stride
    return examples


def collate(examples, width=None):
    """
    Pack windowed examples into a left-padded batch.

    :param list examples: :class:`WindowedExample` items.
    :param int width: Padded width (defaults to the longest example).
    :rtype: saintkt.embeddings.SequenceBatch
    """
    return SequenceBatch.from_sequences(
        [example.interactions for example in examples],
        [example.target_mask for example in examples], width)


class SyntheticTruth(object):
    """
    Hidden parameters of a synthetic dataset: the ability of each student and
    the difficulty of each exercise, keyed by raw id.
    """

    def __init__(self, abilities, difficulties):
        self._abilities = OrderedDict(abilities)
        self._difficulties = OrderedDict(difficulties)

    @property
    def abilities(self):
        return self._abilities

    @property
    def difficulties(self):
        return self._difficulties

    def probability(self, user_id, exercise_id):
        """
        Probability that the user answers the exercise correctly,
        ``sigmoid(ability - difficulty)``.

        :rtype: float
        """
        logit = self._abilities[user_id] - self._difficulties[exercise_id]
        return 1.0 / (1.0 + math.exp(-logit))

    def to_dict(self):
        return OrderedDict([("abilities", self._abilities),
                            ("difficulties", self._difficulties)])

    def write(self, path):
        with io.open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(self.to_dict(), indent=2) + "\n")


def generate_synthetic(num_users, num_exercises, num_categories, seed,
                       min_length=10, max_length=DEFAULT_WINDOW):
    """
    Generate a dataset from a two-parameter response model.

    Student abilities and exercise difficulties are standard normal, and a
    student answers an exercise correctly with probability
    ``sigmoid(ability - difficulty)``. Each exercise belongs to a uniformly
    drawn category. History lengths are uniform on
    ``[min_length, max_length]`` and exercises are drawn uniformly. Elapsed
    times are log-normal (median 20 seconds, log-scale sigma 0.8) rounded
    to tenths of a second; gaps between responses are the elapsed time plus
    an exponential pause with a mean of 5 minutes; timelines start on
    2019-01-01 UTC, staggered by up to 30 days per user.

    :param int num_users: Number of students.
    :param int num_exercises: Number of exercises.
    :param int num_categories: Number of categories.
    :param int seed: Seed of the generator.
    :param int min_length: Shortest history.
    :param int max_length: Longest history.
    :return: Tuple of the dataset and its :class:`SyntheticTruth`.
    :rtype: tuple
    :raises ValidationError: If a size is not positive.
    """
    for label, value in (("num_users", num_users),
                         ("num_exercises", num_exercises),
                         ("num_categories", num_categories)):
        if value < 1:
            raise ValidationError(
                "{} must be positive, got {}".format(label, value))
    if not 1 <= min_length <= max_length:
        raise ValidationError(
            "History lengths must satisfy 1 <= min_length <= max_length")

    generator = RngStream(seed).generator
    abilities = generator.standard_normal(num_users)
    difficulties = generator.standard_normal(num_exercises)
    exercise_categories = generator.integers(0, num_categories,
                                             size=num_exercises)

    columns = OrderedDict((column, []) for column in CsvColumn.ALL)
    for user in range(num_users):
        length = int(generator.integers(min_length, max_length + 1))
        exercises = generator.integers(0, num_exercises, size=length)
        logits = abilities[user] - difficulties[exercises]
        probabilities = 1.0 / (1.0 + np.exp(-logits))
        responses = (generator.random(length) < probabilities).astype(np.int64)
        elapsed = np.round(generator.lognormal(math.log(20.0), 0.8,
                                               size=length), 1)
        pauses = generator.exponential(300.0, size=length)
        offset = generator.integers(0, 30 * 24 * 3600 * 1000)
        gaps_ms = np.round((elapsed + pauses) * 1000.0).astype(np.int64)
        stamps = SYNTHETIC_START_MS + offset + np.cumsum(gaps_ms)

        columns[CsvColumn.USER_ID].extend([str(user)] * length)
        columns[CsvColumn.TIMESTAMP].extend(stamps.tolist())
        columns[CsvColumn.EXERCISE_ID].extend(str(e) for e in exercises)
        columns[CsvColumn.CATEGORY_ID].extend(
            str(exercise_categories[e]) for e in exercises)
        columns[CsvColumn.RESPONSE].extend(responses.tolist())
        columns[CsvColumn.ELAPSED_SECONDS].extend(elapsed.tolist())

    frame = pd.DataFrame(columns).astype({
        CsvColumn.TIMESTAMP: np.int64,
        CsvColumn.RESPONSE: np.int64,
        CsvColumn.ELAPSED_SECONDS: np.float64})
    dataset = _build_dataset(frame)
    truth = SyntheticTruth(
        ((str(user), float(abilities[user])) for user in range(num_users)),
        ((str(exercise), float(difficulties[exercise]))
         for exercise in range(num_exercises)))
    return dataset, truth
