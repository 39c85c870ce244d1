"""
Versioned checkpoint container.

A checkpoint file is a zip archive holding ``metadata.json`` (format
version, architecture, configuration, dataset manifest and its hash, and the
parameter index) followed by one ``.npy`` member per parameter tensor. Member
timestamps are fixed, so saving the same checkpoint twice produces identical
bytes.
"""

from __future__ import absolute_import
from collections import OrderedDict
import hashlib
import io
import json
import logging
import zipfile
import numpy as np
from .architectures import KnowledgeTracer, ModelParams
from .config import TrainConfig
from .constants import CheckpointProp
from .data import DatasetManifest
from .exceptions import CompatibilityError, ValidationError

# Configure local logger
logger = logging.getLogger(__name__)

#: Version of the checkpoint layout.
CHECKPOINT_FORMAT_VERSION = 1

_METADATA_MEMBER = "metadata.json"
_PARAMETER_PREFIX = "parameters/"
_MEMBER_DATE_TIME = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(array):
    buffer = io.BytesIO()
    np.save(buffer, np.ascontiguousarray(array), allow_pickle=False)
    return buffer.getvalue()


def _write_member(archive, name, payload):
    info = zipfile.ZipInfo(name, date_time=_MEMBER_DATE_TIME)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    archive.writestr(info, payload)


class Checkpoint(object):
    """
    Trained parameters with the configuration and dataset manifest they
    belong to.
    """

    def __init__(self, config, parameters, manifest):
        """
        Constructor parameters:

        :param saintkt.config.TrainConfig config: Hyperparameters.
        :param dict parameters: Parameter arrays keyed by name.
        :param saintkt.data.DatasetManifest manifest: Manifest of the
            training data.
        """
        self._config = config
        self._parameters = OrderedDict(
            (name, np.array(array, copy=True))
            for name, array in parameters.items())
        self._manifest = manifest

    @staticmethod
    def from_model(model, manifest):
        """
        Snapshot the current parameters of a model.

        :param saintkt.architectures.KnowledgeTracer model: The model.
        :param saintkt.data.DatasetManifest manifest: Manifest of the
            training data.
        :rtype: Checkpoint
        """
        return Checkpoint(model.config, OrderedDict(
            (name, tensor.data)
            for name, tensor in model.params.named_parameters().items()),
                          manifest)

    @property
    def config(self):
        """
        Configuration of the trained model

        :rtype: saintkt.config.TrainConfig
        """
        return self._config

    @property
    def parameters(self):
        """
        Parameter arrays keyed by name

        :rtype: collections.OrderedDict
        """
        return self._parameters

    @property
    def manifest(self):
        """
        Manifest of the training data

        :rtype: saintkt.data.DatasetManifest
        """
        return self._manifest

    def check_compatible(self, manifest):
        """
        Verify that a dataset uses the vocabularies of this checkpoint.

        :param saintkt.data.DatasetManifest manifest: Manifest of the
            dataset.
        :raises CompatibilityError: If the vocabularies differ.
        """
        if manifest.vocabulary_hash() != self._manifest.vocabulary_hash():
            raise CompatibilityError(
                "Dataset vocabulary ({} exercises, {} categories) does not "
                "match the checkpoint vocabulary ({} exercises, {} "
                "categories)".format(
                    manifest.num_exercises, manifest.num_categories,
                    self._manifest.num_exercises,
                    self._manifest.num_categories))

    def to_model(self):
        """
        Rebuild the model.

        :rtype: saintkt.architectures.KnowledgeTracer
        """
        params = ModelParams.initialize(self._config,
                                        self._manifest.num_exercises,
                                        self._manifest.num_categories)
        params.load_arrays(self._parameters)
        return KnowledgeTracer(self._config, params)

    def metadata(self):
        """
        Return the metadata document stored alongside the parameters.

        :rtype: dict
        """
        return OrderedDict([
            (CheckpointProp.FORMAT_VERSION, CHECKPOINT_FORMAT_VERSION),
            (CheckpointProp.ARCHITECTURE, self._config.architecture),
            (CheckpointProp.CONFIG, self._config.to_dict()),
            (CheckpointProp.MANIFEST, self._manifest.to_dict()),
            (CheckpointProp.MANIFEST_HASH, self._manifest.hash()),
            (CheckpointProp.PARAMETERS, [
                OrderedDict([("name", name),
                             ("shape", list(array.shape)),
                             ("dtype", array.dtype.str)])
                for name, array in self._parameters.items()])])

    def content_hash(self):
        """
        SHA-256 over the metadata and the bytes of every parameter.

        :rtype: str
        """
        digest = hashlib.sha256()
        digest.update(json.dumps(self.metadata(), sort_keys=True,
                                 separators=(",", ":")).encode("utf-8"))
        for name, array in self._parameters.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def save(self, path):
        """
        Write the checkpoint file.

        :param str path: Destination file.
        """
        with zipfile.ZipFile(path, "w") as archive:
            _write_member(archive, _METADATA_MEMBER, json.dumps(
                self.metadata(), indent=2).encode("utf-8"))
            for name, array in self._parameters.items():
                _write_member(archive, _PARAMETER_PREFIX + name + ".npy",
                              _npy_bytes(array))
        logger.info("Wrote checkpoint %s", path)

    @staticmethod
    def load(path):
        """
        Read a checkpoint file.

        :param str path: Checkpoint file.
        :rtype: Checkpoint
        :raises ValidationError: If the file is not a supported checkpoint.
        :raises IOError: If the file cannot be read.
        """
        try:
            with zipfile.ZipFile(path, "r") as archive:
                metadata = json.loads(
                    archive.read(_METADATA_MEMBER).decode("utf-8"),
                    object_pairs_hook=OrderedDict)
                if not isinstance(metadata, dict):
                    raise ValidationError(
                        "Checkpoint metadata must be a JSON object")
                version = metadata.get(CheckpointProp.FORMAT_VERSION)
                if version != CHECKPOINT_FORMAT_VERSION:
                    raise ValidationError(
                        "Unsupported checkpoint format version: {}".format(
                            version))
                parameters = OrderedDict()
                for entry in metadata[CheckpointProp.PARAMETERS]:
                    payload = archive.read(
                        _PARAMETER_PREFIX + entry["name"] + ".npy")
                    parameters[entry["name"]] = np.load(
                        io.BytesIO(payload), allow_pickle=False)
                manifest = DatasetManifest.from_dict(
                    metadata[CheckpointProp.MANIFEST])
                if manifest.hash() != metadata[CheckpointProp.MANIFEST_HASH]:
                    raise ValidationError(
                        "Manifest hash mismatch in checkpoint '{}'".format(
                            path))
                config = TrainConfig.from_dict(metadata[CheckpointProp.CONFIG])
        except ValidationError:
            raise
        except (zipfile.BadZipfile, KeyError, TypeError, AttributeError,
                ValueError) as ex:
            raise ValidationError(
                "Invalid checkpoint file '{}': {}".format(path, ex))
        return Checkpoint(config, parameters, manifest)
