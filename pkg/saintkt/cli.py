"""
Command line interface.

Every command is deterministic given its arguments and seed. Exit codes are
0 on success, 2 for invalid input or usage, 3 for numerical failures and 4
for I/O errors.
"""

from __future__ import absolute_import
from __future__ import print_function
import argparse
import json
import logging
import os
import sys
from ._version import __version__
from .checkpoint import Checkpoint
from .config import SAMPLE_CONFIG_FILE, TrainConfig
from .constants import Architecture, EmbeddingDetail, ExitCode, SplitName
from .data import generate_synthetic, parse_log, write_log, lookup_exercise
from .evaluation import evaluate, export_attention
from .exceptions import (NumericalError, StateError, TrainingDivergedError,
                         ValidationError)
from .training import run_ablation, train

# Configure local logger
logger = logging.getLogger(__name__)

#: File names written into output directories.
DATA_FILE = "interactions.csv"
TRUTH_FILE = "truth.json"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.zip"
TRAIN_LOG_FILE = "train_log.jsonl"

_LOG_FORMAT = '%(asctime)s %(name)s - %(levelname)s - %(message)s'


def _ensure_dir(path):
    if not os.path.isdir(path):
        os.makedirs(path)


def _load_config(args):
    config = TrainConfig.from_file(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def _single_user_history(path, manifest):
    """
    Parse a log holding the interactions of one user against a checkpoint
    vocabulary.
    """
    dataset = parse_log(path, manifest)
    if len(dataset.histories) > 1:
        raise ValidationError(
            "Expected the interactions of one user in '{}', found {} "
            "users".format(path, len(dataset.histories)))
    return next(iter(dataset.histories.values()), [])


def _gen_data(args):
    dataset, truth = generate_synthetic(args.users, args.exercises,
                                        args.categories, args.seed,
                                        args.min_length, args.max_length)
    _ensure_dir(args.out)
    write_log(dataset, os.path.join(args.out, DATA_FILE))
    truth.write(os.path.join(args.out, TRUTH_FILE))
    dataset.manifest.write(os.path.join(args.out, MANIFEST_FILE))
    print(json.dumps(dataset.manifest.to_dict()))


def _train(args):
    config = _load_config(args)
    dataset = parse_log(args.data)
    _ensure_dir(args.out)
    checkpoint_path = os.path.join(args.out, CHECKPOINT_FILE)
    try:
        result = train(config, dataset,
                       os.path.join(args.out, TRAIN_LOG_FILE))
    except TrainingDivergedError as ex:
        if ex.checkpoint is not None:
            ex.checkpoint.save(checkpoint_path)
        raise
    result.checkpoint.save(checkpoint_path)
    print(json.dumps({"checkpoint": checkpoint_path,
                      "best_epoch": result.best_epoch,
                      "epochs": len(result.history)}))


def _evaluate(args):
    checkpoint = Checkpoint.load(args.checkpoint)
    result = evaluate(checkpoint, parse_log(args.data), args.split)
    print(json.dumps(result.to_dict()))


def _predict(args):
    checkpoint = Checkpoint.load(args.checkpoint)
    history = _single_user_history(args.history, checkpoint.manifest) \
        if args.history else []
    target = lookup_exercise(checkpoint.manifest, args.exercise, args.category)
    probability = checkpoint.to_model().predict_next(history, target)
    print(repr(probability))


def _export_attention(args):
    checkpoint = Checkpoint.load(args.checkpoint)
    sequence = _single_user_history(args.input, checkpoint.manifest)
    if not sequence:
        raise ValidationError("'{}' holds no interactions".format(args.input))
    window = checkpoint.config.window
    if len(sequence) > window:
        logger.warning("Keeping the last %d of %d interactions", window,
                       len(sequence))
        sequence = sequence[len(sequence) - window:]
    dumps = export_attention(checkpoint, sequence, args.out)
    print(json.dumps({"matrices": len(dumps), "out": args.out}))


def _ablation(args):
    config = _load_config(args)
    table = run_ablation(config, parse_log(args.data), tuple(args.layers),
                         tuple(args.d_models), tuple(args.architectures),
                         tuple(args.details), args.out)
    print(table.to_csv(index=False, lineterminator="\n"), end="")


def build_parser():
    """
    Create the argument parser of the command line interface.

    :rtype: argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog="saintkt",
        description="Knowledge tracing with SAINT and related attention "
                    "architectures")
    parser.add_argument("--version", action="version",
                        version="%(prog)s " + __version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log debug messages")
    commands = parser.add_subparsers(dest="command")
    commands.required = True

    gen = commands.add_parser("gen-data", help="generate a synthetic dataset")
    gen.add_argument("--users", type=int, required=True)
    gen.add_argument("--exercises", type=int, required=True)
    gen.add_argument("--categories", type=int, default=10)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--min-length", type=int, default=10)
    gen.add_argument("--max-length", type=int, default=100)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(handler=_gen_data)

    trainer = commands.add_parser("train", help="train a model")
    trainer.add_argument("--config", default=SAMPLE_CONFIG_FILE)
    trainer.add_argument("--data", required=True, help="interaction log")
    trainer.add_argument("--out", required=True, help="output directory")
    trainer.add_argument("--seed", type=int, help="override the config seed")
    trainer.set_defaults(handler=_train)

    evaluator = commands.add_parser("evaluate",
                                    help="evaluate a checkpoint on a split")
    evaluator.add_argument("--checkpoint", required=True)
    evaluator.add_argument("--data", required=True, help="interaction log")
    evaluator.add_argument("--split", choices=SplitName.ALL,
                           default=SplitName.TEST)
    evaluator.set_defaults(handler=_evaluate)

    predictor = commands.add_parser(
        "predict", help="predict the next response of one student")
    predictor.add_argument("--checkpoint", required=True)
    predictor.add_argument("--history",
                           help="interaction log of one student (optional)")
    predictor.add_argument("--exercise", required=True,
                           help="raw id of the next exercise")
    predictor.add_argument("--category",
                           help="raw category id of the next exercise")
    predictor.set_defaults(handler=_predict)

    exporter = commands.add_parser("export-attention",
                                   help="export attention matrices")
    exporter.add_argument("--checkpoint", required=True)
    exporter.add_argument("--input", required=True,
                          help="interaction log of one student")
    exporter.add_argument("--out", required=True, help="output directory")
    exporter.set_defaults(handler=_export_attention)

    ablation = commands.add_parser("ablation",
                                   help="run the N x d_model grid")
    ablation.add_argument("--config", default=SAMPLE_CONFIG_FILE)
    ablation.add_argument("--data", required=True, help="interaction log")
    ablation.add_argument("--out", required=True, help="CSV table path")
    ablation.add_argument("--seed", type=int, help="override the config seed")
    ablation.add_argument("--layers", type=int, nargs="+", default=[2, 3, 4])
    ablation.add_argument("--d-models", type=int, nargs="+",
                          default=[256, 512])
    ablation.add_argument("--architectures", nargs="+",
                          choices=Architecture.ALL, default=Architecture.ALL)
    ablation.add_argument("--details", nargs="+",
                          choices=EmbeddingDetail.ALL,
                          default=list(EmbeddingDetail.ALL))
    ablation.set_defaults(handler=_ablation)
    return parser


def _configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def main(argv=None):
    """
    Run the command line interface.

    :param list argv: Arguments (defaults to ``sys.argv[1:]``).
    :return: The exit code.
    :rtype: int
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else ExitCode.VALIDATION
    handler = _configure_logging(args.verbose)
    try:
        args.handler(args)
        return ExitCode.SUCCESS
    except (ValidationError, StateError) as ex:
        logger.error("%s", ex)
        return ExitCode.VALIDATION
    except NumericalError as ex:
        logger.error("%s", ex)
        return ExitCode.NUMERICAL
    except (IOError, OSError) as ex:
        logger.error("%s", ex)
        return ExitCode.IO
    finally:
        logging.getLogger().removeHandler(handler)
