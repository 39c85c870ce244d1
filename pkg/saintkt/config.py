"""
Training configuration and its INI file representation.

A configuration file holds a single ``[TrainConfig]`` section in which every
key of the schema must be present, starting with ``schema_version``.
"""

from __future__ import absolute_import
from collections import OrderedDict
import configparser
import io
import logging
import os
import numpy as np
from .constants import Architecture, EmbeddingDetail
from .exceptions import ConfigError

# Configure local logger
logger = logging.getLogger(__name__)

#: Version of the configuration file schema.
CONFIG_SCHEMA_VERSION = 1

#: Name of the configuration file section.
CONFIG_SECTION = "TrainConfig"

#: Packaged sample configuration holding the default hyperparameters.
SAMPLE_CONFIG_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                                  "_config", "sample", "saint.config")

_DTYPES = {"float64": np.float64, "float32": np.float32}


def _boolean(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: '{}'".format(value))


def _integer(value):
    if isinstance(value, bool):
        raise ValueError("not an integer: '{}'".format(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return int(str(value).strip())


def _text(value):
    return str(value).strip()


# Schema: key -> (parser, default). Order is the order of the file.
_SCHEMA = OrderedDict([
    ("schema_version", (_integer, CONFIG_SCHEMA_VERSION)),
    ("architecture", (_text, Architecture.SAINT)),
    ("num_layers", (_integer, 4)),
    ("d_model", (_integer, 512)),
    ("num_heads", (_integer, 8)),
    ("d_ff", (_integer, 0)),
    ("window", (_integer, 100)),
    ("stride", (_integer, 0)),
    ("dropout", (float, 0.1)),
    ("attention_dropout", (_boolean, False)),
    ("batch_size", (_integer, 128)),
    ("warmup_steps", (_integer, 4000)),
    ("peak_lr", (float, 0.001)),
    ("beta1", (float, 0.9)),
    ("beta2", (float, 0.999)),
    ("epsilon", (float, 1e-8)),
    ("clip_norm", (float, 5.0)),
    ("embedding_detail", (_text, EmbeddingDetail.A)),
    ("max_epochs", (_integer, 100)),
    ("max_steps", (_integer, 0)),
    ("patience", (_integer, 10)),
    ("train_ratio", (float, 0.7)),
    ("val_ratio", (float, 0.1)),
    ("test_ratio", (float, 0.2)),
    ("seed", (_integer, 0)),
    ("dtype", (_text, "float64")),
])


class TrainConfig(object):
    """
    Immutable bundle of the model and training hyperparameters.

    Values are validated on construction. Use :meth:`replace` to derive a
    modified configuration.
    """

    def __init__(self, **values):
        unknown = set(values) - set(_SCHEMA)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError("Unknown configuration key: '{}'".format(key),
                              key)
        self._values = OrderedDict()
        for key, (parser, default) in _SCHEMA.items():
            raw = values.get(key, default)
            try:
                self._values[key] = parser(raw)
            except (TypeError, ValueError):
                raise ConfigError(
                    "Invalid value for '{}': '{}'".format(key, raw), key)
        self._validate()

    def _fail(self, key, requirement):
        raise ConfigError(
            "Invalid value for '{}': {} (must be {})".format(
                key, self._values[key], requirement), key)

    def _validate(self):
        v = self._values
        if v["schema_version"] != CONFIG_SCHEMA_VERSION:
            self._fail("schema_version", CONFIG_SCHEMA_VERSION)
        if v["architecture"] not in Architecture.ALL:
            self._fail("architecture", " or ".join(Architecture.ALL))
        if v["embedding_detail"] not in EmbeddingDetail.ALL:
            self._fail("embedding_detail", " or ".join(EmbeddingDetail.ALL))
        if v["dtype"] not in _DTYPES:
            self._fail("dtype", " or ".join(sorted(_DTYPES)))
        for key in ("num_layers", "d_model", "num_heads", "window",
                    "batch_size", "warmup_steps", "max_epochs"):
            if v[key] < 1:
                self._fail(key, "positive")
        for key in ("d_ff", "max_steps", "patience", "seed"):
            if v[key] < 0:
                self._fail(key, "nonnegative")
        if v["d_model"] % v["num_heads"]:
            self._fail("num_heads", "a divisor of d_model")
        if v["stride"] < 0 or v["stride"] > v["window"]:
            self._fail("stride", "in [0, window]")
        if not 0.0 <= v["dropout"] < 1.0:
            self._fail("dropout", "in [0, 1)")
        for key in ("beta1", "beta2"):
            if not 0.0 <= v[key] < 1.0:
                self._fail(key, "in [0, 1)")
        for key in ("peak_lr", "epsilon"):
            if v[key] <= 0:
                self._fail(key, "positive")
        if v["clip_norm"] < 0:
            self._fail("clip_norm", "nonnegative")
        for key in ("train_ratio", "val_ratio", "test_ratio"):
            if v[key] <= 0:
                self._fail(key, "positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            self._fail("test_ratio", "such that the ratios sum to 1")

    def __getattr__(self, name):
        values = self.__dict__.get("_values")
        if values is not None and name in values:
            return values[name]
        raise AttributeError(name)

    def __eq__(self, other):
        return isinstance(other, TrainConfig) and \
            self._values == other._values

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "TrainConfig({})".format(", ".join(
            "{}={!r}".format(key, value)
            for key, value in self._values.items()))

    @property
    def ffn_dim(self):
        """
        Inner width of the feed-forward networks (``4 * d_model`` when
        ``d_ff`` is 0)

        :rtype: int
        """
        return self._values["d_ff"] or 4 * self._values["d_model"]

    @property
    def window_stride(self):
        """
        Stride between training windows (the window size when ``stride`` is
        0)

        :rtype: int
        """
        return self._values["stride"] or self._values["window"]

    @property
    def ratios(self):
        """
        Train, validation and test ratios

        :rtype: tuple
        """
        return (self._values["train_ratio"], self._values["val_ratio"],
                self._values["test_ratio"])

    @property
    def numpy_dtype(self):
        """
        Floating point type of the parameters

        :rtype: type
        """
        return _DTYPES[self._values["dtype"]]

    def replace(self, **overrides):
        """
        Return a copy with some values replaced.

        :rtype: TrainConfig
        """
        values = OrderedDict(self._values)
        values.update(overrides)
        return TrainConfig(**values)

    def to_dict(self):
        """
        Return a dictionary representation of this configuration.

        :return: The dictionary representation
        :rtype: dict
        """
        return OrderedDict(self._values)

    @staticmethod
    def from_dict(values):
        """
        Create a configuration from a dictionary in which every schema key is
        present.

        :param dict values: Configuration values.
        :rtype: TrainConfig
        :raises ConfigError: If a key is missing or unknown, or a value is
            invalid.
        """
        for key in _SCHEMA:
            if key not in values:
                raise ConfigError(
                    "Missing configuration key: '{}'".format(key), key)
        return TrainConfig(**values)

    @staticmethod
    def from_file(path):
        """
        Read a configuration file.

        :param str path: Path of the INI file.
        :rtype: TrainConfig
        :raises ConfigError: If the file does not hold a valid configuration.
        :raises IOError: If the file cannot be read.
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        with io.open(path, "r", encoding="utf-8") as handle:
            try:
                parser.read_file(handle)
            except configparser.Error as ex:
                raise ConfigError(
                    "Unable to parse configuration file '{}': {}".format(
                        path, ex))
        if not parser.has_section(CONFIG_SECTION):
            raise ConfigError(
                "Configuration file '{}' has no [{}] section".format(
                    path, CONFIG_SECTION))
        config = TrainConfig.from_dict(OrderedDict(
            parser.items(CONFIG_SECTION)))
        logger.debug("Read configuration from %s: %r", path, config)
        return config

    def write(self, path):
        """
        Write this configuration as an INI file.

        :param str path: Destination file.
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.add_section(CONFIG_SECTION)
        for key, value in self._values.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            parser.set(CONFIG_SECTION, key, repr(value)
                       if isinstance(value, float) else str(value))
        with io.open(path, "w", encoding="utf-8") as handle:
            parser.write(handle)
