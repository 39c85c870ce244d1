from __future__ import absolute_import
import builtins
import io
import json
import os
import shutil
import tempfile
import unittest
import zipfile

from mock import patch

from saintkt import __version__
from saintkt.architectures import KnowledgeTracer
from saintkt.checkpoint import Checkpoint
from saintkt.cli import (CHECKPOINT_FILE, DATA_FILE, MANIFEST_FILE,
                         TRAIN_LOG_FILE, TRUTH_FILE, build_parser, main)
from saintkt.config import TrainConfig
from saintkt.constants import (Architecture, CheckpointProp, EmbeddingDetail,
                               ExitCode)
from saintkt.data import parse_log
from saintkt.exceptions import NumericalError

HEADER = (b"user_id,timestamp,exercise_id,category_id,response,"
          b"elapsed_seconds\n")


class CliTest(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def path(self, *names):
        return os.path.join(self.directory, *names)

    def run_main(self, *argv):
        with patch.object(builtins, "print") as mock_print:
            code = main(list(argv))
        output = "".join(str(call[0][0]) for call in mock_print.call_args_list)
        return code, output

    def gen_data(self, out="data", users=12, seed=0):
        return self.run_main("gen-data", "--users", str(users),
                             "--exercises", "6", "--categories", "2",
                             "--seed", str(seed), "--min-length", "5",
                             "--max-length", "15", "--out", self.path(out))

    def write_config(self, **overrides):
        values = dict(architecture=Architecture.SAINT, num_layers=1,
                      d_model=8, num_heads=2, window=10, batch_size=8,
                      max_epochs=1, warmup_steps=10)
        values.update(overrides)
        path = self.path("tiny.config")
        TrainConfig(**values).write(path)
        return path

    def test_version(self):
        with patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = main(["--version"])
        self.assertEqual(code, ExitCode.SUCCESS)
        self.assertIn(__version__, stdout.getvalue())

    def test_usage_error(self):
        with patch("sys.stderr", new_callable=io.StringIO):
            self.assertEqual(main(["frobnicate"]), ExitCode.VALIDATION)
            self.assertEqual(main([]), ExitCode.VALIDATION)

    def test_gen_data(self):
        code, output = self.gen_data()
        self.assertEqual(code, ExitCode.SUCCESS)
        for name in (DATA_FILE, TRUTH_FILE, MANIFEST_FILE):
            self.assertTrue(os.path.exists(self.path("data", name)))
        self.assertEqual(json.loads(output)["num_users"], 12)

    def test_gen_data_is_deterministic(self):
        self.gen_data("first")
        self.gen_data("second")
        with io.open(self.path("first", DATA_FILE), "rb") as first, \
                io.open(self.path("second", DATA_FILE), "rb") as second:
            self.assertEqual(first.read(), second.read())

    def test_gen_data_without_users(self):
        code, _ = self.gen_data(users=0)
        self.assertEqual(code, ExitCode.VALIDATION)

    def test_missing_config_key(self):
        self.gen_data()
        config = self.path("broken.config")
        with io.open(config, "w", encoding="utf-8") as handle:
            handle.write(u"[TrainConfig]\nschema_version = 1\n")
        code, _ = self.run_main("train", "--config", config, "--data",
                                self.path("data", DATA_FILE), "--out",
                                self.path("run"))
        self.assertEqual(code, ExitCode.VALIDATION)

    def test_missing_data_file(self):
        code, _ = self.run_main("train", "--config", self.write_config(),
                                "--data", self.path("absent.csv"), "--out",
                                self.path("run"))
        self.assertEqual(code, ExitCode.IO)

    def test_train_evaluate_predict_export(self):
        self.gen_data()
        data = self.path("data", DATA_FILE)
        code, output = self.run_main("train", "--config",
                                     self.write_config(), "--data", data,
                                     "--out", self.path("run"))
        self.assertEqual(code, ExitCode.SUCCESS)
        self.assertEqual(json.loads(output)["epochs"], 1)
        checkpoint = self.path("run", CHECKPOINT_FILE)
        self.assertTrue(os.path.exists(checkpoint))
        self.assertTrue(os.path.exists(self.path("run", TRAIN_LOG_FILE)))

        code, output = self.run_main("evaluate", "--checkpoint", checkpoint,
                                     "--data", data, "--split", "val")
        self.assertEqual(code, ExitCode.SUCCESS)
        self.assertEqual(json.loads(output)["split"], "val")

        code, output = self.run_main("predict", "--checkpoint", checkpoint,
                                     "--exercise", "3")
        self.assertEqual(code, ExitCode.SUCCESS)
        self.assertTrue(0.0 < float(output) < 1.0)

        history = self.path("history.csv")
        with io.open(data, "r", encoding="utf-8") as source:
            lines = source.read().splitlines()
        with io.open(history, "w", encoding="utf-8") as target:
            target.write(u"\n".join(
                [lines[0]] + [line for line in lines[1:]
                              if line.startswith("0,")][:4]) + u"\n")
        code, output = self.run_main("export-attention", "--checkpoint",
                                     checkpoint, "--input", history,
                                     "--out", self.path("attention"))
        self.assertEqual(code, ExitCode.SUCCESS)
        self.assertEqual(json.loads(output)["matrices"], 3 * 1 * 2)

        code, _ = self.run_main("predict", "--checkpoint", checkpoint,
                                "--history", data, "--exercise", "3")
        self.assertEqual(code, ExitCode.VALIDATION)

    def test_ablation_defaults_to_both_details(self):
        self.assertEqual(
            build_parser().parse_args(
                ["ablation", "--data", "d.csv", "--out", "t.csv"]).details,
            list(EmbeddingDetail.ALL))
        self.gen_data()
        code, output = self.run_main(
            "ablation", "--config", self.write_config(), "--data",
            self.path("data", DATA_FILE), "--out", self.path("ablation.csv"),
            "--layers", "1", "--d-models", "8", "--architectures", "SAINT")
        self.assertEqual(code, ExitCode.SUCCESS)
        rows = output.splitlines()[1:]
        self.assertEqual([row.split(",")[1] for row in rows[:2]],
                         list(EmbeddingDetail.ALL))
        self.assertTrue(os.path.exists(self.path("ablation.csv")))

    def test_invalid_checkpoint(self):
        self.gen_data()
        junk = self.path("junk.zip")
        with io.open(junk, "wb") as handle:
            handle.write(b"junk")
        code, _ = self.run_main("evaluate", "--checkpoint", junk, "--data",
                                self.path("data", DATA_FILE))
        self.assertEqual(code, ExitCode.VALIDATION)

    def write_bytes(self, name, payload):
        with io.open(self.path(name), "wb") as handle:
            handle.write(payload)
        return self.path(name)

    def test_undecodable_log(self):
        data = self.write_bytes("latin1.csv",
                               HEADER + b"u\xff,1000,e,c,1,1.0\n")
        code, _ = self.run_main("train", "--config", self.write_config(),
                                "--data", data, "--out", self.path("run"))
        self.assertEqual(code, ExitCode.VALIDATION)

    def test_timestamp_out_of_range(self):
        data = self.write_bytes(
            "future.csv", HEADER + b"u,99999999999999999,e,c,1,1.0\n")
        code, _ = self.run_main("train", "--config", self.write_config(),
                                "--data", data, "--out", self.path("run"))
        self.assertEqual(code, ExitCode.VALIDATION)

    def rewrite_checkpoint(self, replace):
        self.gen_data()
        dataset = parse_log(self.path("data", DATA_FILE))
        config = TrainConfig(num_layers=1, d_model=8, num_heads=2, window=10)
        model = KnowledgeTracer.create(config,
                                       dataset.manifest.num_exercises,
                                       dataset.manifest.num_categories)
        Checkpoint.from_model(model, dataset.manifest).save(
            self.path("good.zip"))
        with zipfile.ZipFile(self.path("good.zip")) as source, \
                zipfile.ZipFile(self.path("bad.zip"), "w") as target:
            for info in source.infolist():
                payload = source.read(info.filename)
                target.writestr(info, replace(info.filename, payload))
        return self.path("bad.zip")

    def evaluate_exit_code(self, checkpoint):
        code, _ = self.run_main("evaluate", "--checkpoint", checkpoint,
                                "--data", self.path("data", DATA_FILE))
        return code

    def test_corrupt_parameter_member(self):
        checkpoint = self.rewrite_checkpoint(
            lambda name, payload: payload[:20] if name.endswith(".npy")
            else payload)
        self.assertEqual(self.evaluate_exit_code(checkpoint),
                         ExitCode.VALIDATION)

    def test_corrupt_metadata(self):
        checkpoint = self.rewrite_checkpoint(
            lambda name, payload: b"{not json" if name == "metadata.json"
            else payload)
        self.assertEqual(self.evaluate_exit_code(checkpoint),
                         ExitCode.VALIDATION)

    def test_metadata_without_manifest(self):
        def drop_manifest(name, payload):
            if name != "metadata.json":
                return payload
            metadata = json.loads(payload.decode("utf-8"))
            del metadata[CheckpointProp.MANIFEST]
            return json.dumps(metadata).encode("utf-8")
        checkpoint = self.rewrite_checkpoint(drop_manifest)
        self.assertEqual(self.evaluate_exit_code(checkpoint),
                         ExitCode.VALIDATION)

    def test_numerical_failure(self):
        self.gen_data()
        with patch("saintkt.training.adam_step",
                   side_effect=NumericalError("overflow")):
            code, _ = self.run_main("train", "--config",
                                    self.write_config(), "--data",
                                    self.path("data", DATA_FILE), "--out",
                                    self.path("run"))
        self.assertEqual(code, ExitCode.NUMERICAL)
        self.assertTrue(os.path.exists(self.path("run", CHECKPOINT_FILE)))


if __name__ == "__main__":
    unittest.main()
