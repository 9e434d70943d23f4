# -*- coding: utf-8 -*-
import io
import logging
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd
import yaml
from click.testing import CliRunner

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli import cli  # noqa: E402
from dataset import make_planted_block_dataset  # noqa: E402
from tests.toy_data import cli_dataset_args, make_toy_dataset, write_dataset  # noqa: E402

FAST = ["--epochs", "3", "--latent-dim", "4", "--memory-dim", "4", "--neg-ratio", "1", "--batch-size", "8"]

NEW_DRUG_ASSOC = np.array([
    [1, 1, 0, 0],
    [0, 1, 0, 0],
    [1, 0, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 1, 1],
])


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()
        self.runner = CliRunner()
        self.toy = cli_dataset_args(write_dataset(make_toy_dataset(), os.path.join(self.tempDir, "toy")))

    def tearDown(self):
        # the group installs a handler on the runner's stream
        logging.getLogger().handlers.clear()
        shutil.rmtree(self.tempDir)

    def invoke(self, *args):
        return self.runner.invoke(cli, ["--log-level", "ERROR"] + [str(a) for a in args])

    def path(self, name):
        return os.path.join(self.tempDir, name)


class TestStatsAndUsage(CliTestCase):
    def test_stats(self):
        result = self.invoke("stats", *self.toy)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("single_association_drugs", result.output)
        self.assertIn("interactions", result.output)

    def test_missing_required_option(self):
        result = self.invoke("stats", *self.toy[2:])
        self.assertEqual(result.exit_code, 2)

    def test_out_of_range_hyperparameter(self):
        result = self.invoke("train", *self.toy, "--eta", "1.5", "--out", self.path("m.ckpt"))
        self.assertEqual(result.exit_code, 2)
        self.assertIn("1.5", result.output)
        self.assertIn("x<=1", result.output)

    def test_missing_file(self):
        args = list(self.toy)
        args[1] = self.path("nowhere.txt")
        result = self.invoke("stats", *args)
        self.assertEqual(result.exit_code, 1)

    def test_config_file_with_override(self):
        config = self.path("config.yaml")
        with open(config, "w") as f:
            f.write("epochs: 2\nlatent_dim: 3\nneg_ratio: 1\n")
        out = self.path("model.ckpt")
        result = self.invoke("train", *self.toy, "--config", config, "--latent-dim", "2", "--out", out)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(self.path("model.config.yaml")) as f:
            card = f.read()
        self.assertIn("latent_dim: 2", card)
        self.assertIn("epochs: 2", card)


class TestTrainAndPredict(CliTestCase):
    def setUp(self):
        super().setUp()
        self.model = self.path("model.ckpt")
        result = self.invoke("train", *self.toy, *FAST, "--out", self.model)
        self.assertEqual(result.exit_code, 0, result.output)

    def test_train_outputs(self):
        for name in ("model.ckpt", "model.loss.csv", "model.config.yaml"):
            self.assertTrue(os.path.exists(self.path(name)), name)
        trace = pd.read_csv(self.path("model.loss.csv"))
        self.assertEqual(trace["epoch"].tolist(), [1, 2, 3])

    def test_predict_top(self):
        result = self.invoke("predict", *self.toy, "--model", self.model, "--all", "--top", "3")
        self.assertEqual(result.exit_code, 0, result.output)
        table = pd.read_csv(io.StringIO(result.output))
        self.assertEqual(len(table), 3)
        self.assertTrue(table["score"].is_monotonic_decreasing)
        known = {("DB00000", "OMIM0000"), ("DB00000", "OMIM0002"), ("DB00001", "OMIM0001"),
                 ("DB00002", "OMIM0000"), ("DB00002", "OMIM0001"), ("DB00003", "OMIM0002")}
        self.assertFalse(known & set(zip(table["drug_id"], table["disease_id"])))

    def test_predict_single_drug_to_file(self):
        out = self.path("predictions.csv")
        result = self.invoke("predict", *self.toy, "--model", self.model, "--drug", "DB00003", "--out", out)
        self.assertEqual(result.exit_code, 0, result.output)
        table = pd.read_csv(out)
        self.assertEqual(set(table["drug_id"]), {"DB00003"})
        self.assertEqual(len(table), 2)

    def test_predict_usage_errors(self):
        self.assertEqual(self.invoke("predict", *self.toy, "--model", self.model, "--all", "--top", "0").exit_code, 2)
        self.assertEqual(self.invoke("predict", *self.toy, "--model", self.model).exit_code, 2)
        self.assertEqual(self.invoke("predict", *self.toy, "--model", self.model,
                                     "--all", "--drug", "DB00001").exit_code, 2)

    def test_unknown_drug(self):
        result = self.invoke("predict", *self.toy, "--model", self.model, "--drug", "DB99999")
        self.assertEqual(result.exit_code, 1)
        self.assertIn("DB99999", result.output)

    def test_checkpoint_for_other_dataset(self):
        other = cli_dataset_args(write_dataset(make_planted_block_dataset(n_drugs=21, seed=0), self.path("planted")))
        result = self.invoke("predict", *other, "--model", self.model, "--all")
        self.assertEqual(result.exit_code, 1)


class TestEvaluate(CliTestCase):
    def test_cv_is_reproducible(self):
        outputs = []
        for name in ("a.csv", "b.csv"):
            result = self.invoke("evaluate", *self.toy, *FAST, "--folds", "2", "--out", self.path(name))
            self.assertEqual(result.exit_code, 0, result.output)
            self.assertIn("AUC", result.output)
            with open(self.path(name), "rb") as f:
                outputs.append(f.read())
        self.assertEqual(outputs[0], outputs[1])
        self.assertTrue(os.path.exists(self.path("a.config.yaml")))

    def test_new_drug(self):
        data = cli_dataset_args(write_dataset(make_toy_dataset(NEW_DRUG_ASSOC), self.path("new_drug")))
        result = self.invoke("evaluate", *data, *FAST, "--scenario", "new-drug", "--out", self.path("nd.csv"))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("New-drug test set: 3 drugs", result.output)

    def test_timing_is_opt_in(self):
        self.invoke("evaluate", *self.toy, *FAST, "--folds", "2", "--out", self.path("zero.csv"))
        self.assertTrue((pd.read_csv(self.path("zero.csv"))["train_seconds"] == 0.0).all())
        result = self.invoke("evaluate", *self.toy, *FAST, "--folds", "2", "--timing", "--out", self.path("timed.csv"))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertGreater(pd.read_csv(self.path("timed.csv"))["train_seconds"].iloc[0], 0.0)

    def test_new_drug_rows_only(self):
        data = cli_dataset_args(write_dataset(make_toy_dataset(NEW_DRUG_ASSOC), self.path("new_drug")))
        result = self.invoke("evaluate", *data, *FAST, "--scenario", "new-drug", "--drug-rows-only",
                             "--out", self.path("rows.csv"))
        self.assertEqual(result.exit_code, 0, result.output)
        with open(self.path("rows.config.yaml")) as f:
            self.assertEqual(yaml.safe_load(f)["scored_cells"], 12)

    def test_knn_method(self):
        result = self.invoke("evaluate", *self.toy, "--folds", "2", "--method", "knn", "--out", self.path("knn.csv"))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(len(pd.read_csv(self.path("knn.csv"))), 3)


class TestGridSearch(CliTestCase):
    def test_dry_run_full_grid(self):
        result = self.invoke("gridsearch", *self.toy, "--full-grid", "--dry-run")
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("5625 combinations", result.output)

    def test_empty_grid(self):
        self.assertEqual(self.invoke("gridsearch", *self.toy, "--dry-run").exit_code, 2)
        self.assertEqual(self.invoke("gridsearch", *self.toy, "--grid", "eta=", "--dry-run").exit_code, 2)
        self.assertEqual(self.invoke("gridsearch", *self.toy, "--grid", "bogus=1", "--dry-run").exit_code, 2)

    def test_leaderboard(self):
        planted = cli_dataset_args(write_dataset(make_planted_block_dataset(seed=0), self.path("planted")))
        out = self.path("board.csv")
        result = self.invoke("gridsearch", *planted, *FAST, "--grid", "memory_dim=2,4", "--grid", "eta=0.5,0.7",
                             "--jobs", "1", "--out", out)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("4 combinations", result.output)
        board = pd.read_csv(out)
        self.assertEqual(len(board), 4)
        self.assertEqual(board["rank"].tolist(), [1, 2, 3, 4])
        self.assertTrue(board["val_auc"].is_monotonic_decreasing)


if __name__ == '__main__':
    unittest.main()
