from __future__ import absolute_import
from ._version import __version__
from .architectures import (KnowledgeTracer, ModelParams,
                            expected_parameter_count, ltmti_forward,
                            saint_forward, ssakt_forward, utmti_forward)
from .checkpoint import Checkpoint
from .config import TrainConfig
from .constants import *
from .data import (DatasetManifest, InteractionDataset, WindowedExample,
                   generate_synthetic, parse_log, split_users, window,
                   write_log)
from .embeddings import ExerciseInfo, Interaction, ResponseInfo
from .evaluation import (EvaluationResult, acc, auc, evaluate,
                         export_attention)
from .exceptions import *
from .training import TrainResult, run_ablation, train


def get_version():
    """
    Returns the version of the package

    :return: The version of the package
    """
    return __version__
