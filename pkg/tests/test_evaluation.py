# -*- coding: utf-8 -*-
import os
import shutil
import sys
import tempfile
import unittest
from unittest import mock

import numpy as np
import pandas as pd
import yaml

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dataset import (AssociationMatrix, DrugDiseaseDataset, SimilarityMatrix, make_fold_plan,  # noqa: E402
                     make_new_drug_split, make_planted_block_dataset, make_training_view, sample_negatives,
                     training_view_for)
from errors import ConfigError, LeakageError, MetricError, TrainingError  # noqa: E402
from evaluation import (ScoredPair, assert_no_leakage, auc, aupr, cross_validate, evaluate_new_drug,  # noqa: E402
                        grid_search, hit_ratio, nearest_neighbor_scores, rank_positions, ranked_predictions,
                        scored_cells, write_ranked_predictions)
from hamn_model import train  # noqa: E402
from numerics import make_rng  # noqa: E402
from tests.toy_data import make_toy_dataset  # noqa: E402
from train_config import TrainConfig  # noqa: E402

FAST_CONFIG = TrainConfig(latent_dim=4, memory_dim=4, epochs=3, batch_size=16, neg_ratio=1,
                          learning_rate=0.05, lr_decay_every=0, seed=5)

# drugs 1, 2 and 3 have one association each; the training rows leave four unknown cells
NEW_DRUG_ASSOC = np.array([
    [1, 1, 0, 0],
    [0, 1, 0, 0],
    [1, 0, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 1, 1],
])


def brute_force_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_aupr(scores, labels):
    total_pos = labels.sum()
    area, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = np.sum(predicted & (labels == 1))
        recall = tp / total_pos
        precision = tp / predicted.sum()
        area += (recall - previous_recall) * precision
        previous_recall = recall
    return area


class TestMetrics(unittest.TestCase):
    def test_auc_examples(self):
        self.assertEqual(auc([ScoredPair(0, 0, 0.9, 1), ScoredPair(0, 1, 0.1, 0)]), 1.0)
        self.assertEqual(auc(np.array([0.9, 0.3, 0.8]), np.array([1, 1, 0])), 0.5)
        self.assertEqual(auc(np.full(6, 0.4), np.array([1, 0, 1, 0, 0, 0])), 0.5)

    def test_auc_single_class(self):
        with self.assertRaises(MetricError):
            auc(np.array([0.2, 0.4]), np.array([1, 1]))

    def test_aupr_examples(self):
        self.assertEqual(aupr(np.array([0.9, 0.8, 0.1]), np.array([1, 1, 0])), 1.0)
        self.assertEqual(aupr(np.array([0.9, 0.8]), np.array([0, 1])), 0.5)

    def test_aupr_no_positive(self):
        with self.assertRaises(MetricError):
            aupr(np.array([0.2, 0.4]), np.array([0, 0]))

    def test_against_brute_force(self):
        rng = make_rng(2024)
        for _ in range(100):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            # rounding creates ties
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            self.assertAlmostEqual(auc(scores, labels), brute_force_auc(scores, labels), delta=1e-12)
            self.assertAlmostEqual(aupr(scores, labels), brute_force_aupr(scores, labels), delta=1e-12)

    def test_random_aupr_is_prevalence(self):
        rng = make_rng(8)
        labels = np.zeros(200, dtype=int)
        labels[:100] = 1
        values = [aupr(rng.random(200), labels) for _ in range(1000)]
        self.assertAlmostEqual(float(np.mean(values)), 0.5, delta=0.02)

    def test_hit_ratio_examples(self):
        self.assertEqual(hit_ratio([1, 1, 1], 1), 1.0)
        self.assertAlmostEqual(hit_ratio([2, 11, 5], 10), 2.0 / 3.0)
        self.assertEqual(hit_ratio([11], 10), 0.0)

    def test_hit_ratio_cutoff(self):
        with self.assertRaises(ConfigError):
            hit_ratio([1, 2], 0)

    def test_hit_ratio_nondecreasing(self):
        ranks = make_rng(1).integers(1, 30, size=50)
        values = [hit_ratio(ranks, n) for n in range(1, 31)]
        self.assertEqual(values, sorted(values))


class TestRanking(unittest.TestCase):
    def setUp(self):
        self.assoc = AssociationMatrix(("a", "b"), ("w", "x", "y", "z"),
                                       np.array([[1, 1, 0, 0], [0, 0, 1, 0]]))

    def test_known_positives_do_not_compete(self):
        scores = np.array([[0.2, 0.9, 0.5, 0.1], [0.0, 0.0, 0.0, 0.0]])
        # (0, 0): disease 1 is known and ignored, disease 2 scores higher
        self.assertEqual(rank_positions(scores, self.assoc, np.array([[0, 0]])).tolist(), [2])

    def test_ties_broken_by_disease_index(self):
        scores = np.array([[0.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.5, 0.5]])
        self.assertEqual(rank_positions(scores, self.assoc, np.array([[1, 2]])).tolist(), [3])
        scores[1, 2] = 0.6
        self.assertEqual(rank_positions(scores, self.assoc, np.array([[1, 2]])).tolist(), [1])

    def test_monotone_transform_invariance(self):
        rng = make_rng(4)
        scores = rng.random((2, 4))
        labels = np.array([1, 1, 0, 1, 0, 0, 1, 0])
        transformed = np.exp(3.0 * scores) + 1.0
        pairs = np.array([[0, 0], [0, 1], [1, 2]])
        self.assertEqual(auc(scores.ravel(), labels), auc(transformed.ravel(), labels))
        self.assertEqual(aupr(scores.ravel(), labels), aupr(transformed.ravel(), labels))
        np.testing.assert_array_equal(rank_positions(scores, self.assoc, pairs),
                                      rank_positions(transformed, self.assoc, pairs))


class TestLeakage(unittest.TestCase):
    def test_fold_views_do_not_leak(self):
        dataset = make_planted_block_dataset(seed=1)
        plan = make_fold_plan(dataset.assoc, 5, seed=3)
        for fold in range(5):
            view = make_training_view(dataset, plan.train_pairs(fold))
            assert_no_leakage(view, plan.test_pairs(fold))
            negatives = sample_negatives(dataset.assoc, view.train_pairs, 1, seed=fold)
            test = {tuple(p) for p in plan.test_pairs(fold)}
            self.assertFalse(test & {tuple(p) for p in negatives})

    def test_leak_detected(self):
        dataset = make_toy_dataset()
        view = training_view_for(dataset, "full")
        with self.assertRaises(LeakageError):
            assert_no_leakage(view, np.array([[0, 0]]))


class TestCrossValidation(unittest.TestCase):
    def test_two_folds_on_toy(self):
        report = cross_validate(make_toy_dataset(), FAST_CONFIG, k=2, timing=False)
        self.assertEqual(len(report.rows), 2)
        frame = report.to_frame()
        self.assertEqual(frame["fold"].tolist(), ["0", "1", "mean"])
        for column in ("auc", "aupr", "hr1", "hr5", "hr10"):
            self.assertTrue(frame[column].between(0.0, 1.0).all())

    def test_deterministic(self):
        dataset = make_planted_block_dataset(seed=0)
        a = cross_validate(dataset, FAST_CONFIG, k=3, timing=False).to_frame()
        b = cross_validate(dataset, FAST_CONFIG, k=3, timing=False).to_frame()
        pd.testing.assert_frame_equal(a, b)

    def test_parallel_matches_serial(self):
        dataset = make_planted_block_dataset(seed=0)
        serial = cross_validate(dataset, FAST_CONFIG, k=3, jobs=1, timing=False).to_frame()
        parallel = cross_validate(dataset, FAST_CONFIG, k=3, jobs=2, timing=False).to_frame()
        pd.testing.assert_frame_equal(serial, parallel)

    def test_training_error_names_fold(self):
        with mock.patch("evaluation.train", side_effect=TrainingError("diverged", 3)):
            with self.assertRaises(TrainingError) as ctx:
                cross_validate(make_toy_dataset(), FAST_CONFIG, k=2)
        self.assertEqual((ctx.exception.fold, ctx.exception.epoch), (0, 3))

    def test_nearest_neighbour_oracle_recovers_blocks(self):
        report = cross_validate(make_planted_block_dataset(seed=0), FAST_CONFIG, k=5, method="knn", timing=False)
        self.assertGreaterEqual(report.mean()["auc"], 0.85)

    def test_hamn_recovers_blocks(self):
        dataset = make_planted_block_dataset(seed=0)
        config = TrainConfig(latent_dim=8, memory_dim=8, learning_rate=0.1, lr_decay_every=0,
                             epochs=200, batch_size=32, neg_ratio=2, seed=0)
        report = cross_validate(dataset, config, k=5, timing=False)
        self.assertGreaterEqual(report.mean()["auc"], 0.85)
        knn = cross_validate(dataset, config, k=5, method="knn", timing=False)
        self.assertGreaterEqual(knn.mean()["auc"], 0.85)
        trace = train(training_view_for(dataset, "fold", fold=0, k=5, seed=config.seed), config).loss_trace
        self.assertLessEqual(trace[-1], 0.5 * trace[0])

    def test_csv_and_run_card(self):
        tempDir = tempfile.mkdtemp()
        try:
            report = cross_validate(make_toy_dataset(), FAST_CONFIG, k=2, timing=False)
            path = os.path.join(tempDir, "metrics.csv")
            report.write_csv(path)
            card = report.write_run_card(path, "evaluate --folds 2")
            with open(path, "rb") as f:
                content = f.read()
            self.assertNotIn(b"\r\n", content)
            self.assertTrue(content.startswith(b"fold,auc,aupr,hr1,hr5,hr10,train_seconds\n"))
            self.assertEqual(len(content.splitlines()), 4)
            with open(card) as f:
                echo = yaml.safe_load(f)
            self.assertEqual(echo["seed"], FAST_CONFIG.seed)
            self.assertEqual(echo["dataset"], {"drugs": 4, "diseases": 3, "positives": 6})
            self.assertEqual(echo["config"]["latent_dim"], 4)
        finally:
            shutil.rmtree(tempDir)


class TestNewDrug(unittest.TestCase):
    def test_single_association_drugs_held_out(self):
        report = evaluate_new_drug(make_toy_dataset(NEW_DRUG_ASSOC), FAST_CONFIG, timing=False)
        self.assertEqual(report.info["test_drugs"], 3)
        self.assertEqual(report.scenario, "new-drug")
        self.assertEqual(len(report.rows), 1)

    def test_scored_cells_follow_cross_validation(self):
        dataset = make_toy_dataset(NEW_DRUG_ASSOC)
        split = make_new_drug_split(dataset.assoc)
        expected = NEW_DRUG_ASSOC == 0
        expected[[1, 2, 3], [1, 0, 2]] = True
        np.testing.assert_array_equal(scored_cells(dataset.assoc, split.test_pairs), expected)
        rows_only = scored_cells(dataset.assoc, split.test_pairs, split.test_drugs)
        self.assertEqual(np.flatnonzero(rows_only.any(axis=1)).tolist(), [1, 2, 3])
        self.assertTrue(rows_only[[1, 2, 3]].all())

        self.assertEqual(evaluate_new_drug(dataset, FAST_CONFIG, timing=False).info["scored_cells"], 16)
        report = evaluate_new_drug(dataset, FAST_CONFIG, timing=False, drug_rows_only=True)
        self.assertEqual(report.info["scored_cells"], 12)

    def test_empty_split(self):
        assoc = AssociationMatrix(("a", "b"), ("x", "y", "z"), np.array([[1, 1, 0], [0, 1, 1]]))
        dataset = DrugDiseaseDataset(assoc, SimilarityMatrix(("a", "b"), np.eye(2)),
                                     SimilarityMatrix(("x", "y", "z"), np.eye(3)))
        with self.assertRaises(ConfigError):
            evaluate_new_drug(dataset, FAST_CONFIG)

    def test_knn_scores_use_similar_drugs(self):
        dataset = make_toy_dataset()
        view = training_view_for(dataset, "new-drug")
        scores = nearest_neighbor_scores(view, k=1)
        # drug 3's most similar drug is 2, known for diseases 0 and 1
        np.testing.assert_allclose(scores[3], [1.0, 1.0, 0.0])


class TestGridSearch(unittest.TestCase):
    def test_leaderboard(self):
        dataset = make_planted_block_dataset(seed=0)
        grid = {"memory_dim": [2, 4], "eta": [0.5, 0.7]}
        board = grid_search(dataset, FAST_CONFIG, grid)
        self.assertEqual(len(board), 4)
        self.assertEqual(board["rank"].tolist(), [1, 2, 3, 4])
        self.assertTrue(board["val_auc"].is_monotonic_decreasing)
        pd.testing.assert_frame_equal(board, grid_search(dataset, FAST_CONFIG, grid))

    def test_empty_grid(self):
        with self.assertRaises(ConfigError):
            grid_search(make_toy_dataset(), FAST_CONFIG, {})
        with self.assertRaises(ConfigError):
            grid_search(make_toy_dataset(), FAST_CONFIG, {"eta": []})


class TestRankedPredictions(unittest.TestCase):
    def test_known_pairs_absent_and_sorted(self):
        dataset = make_toy_dataset()
        scores = make_rng(0).random((4, 3))
        table = ranked_predictions(scores, dataset)
        self.assertEqual(len(table), 6)
        self.assertTrue(table["score"].is_monotonic_decreasing)
        known = {(dataset.assoc.drug_ids[i], dataset.assoc.disease_ids[j])
                 for i, j in dataset.assoc.positive_pairs()}
        self.assertFalse(known & set(zip(table["drug_id"], table["disease_id"])))

    def test_single_drug_top(self):
        dataset = make_toy_dataset()
        scores = np.full((4, 3), 0.5)
        tempDir = tempfile.mkdtemp()
        try:
            table = write_ranked_predictions(scores, dataset, os.path.join(tempDir, "p.csv"), drug=3, top=1)
            # ties fall back to the smaller disease index
            self.assertEqual(table["disease_id"].tolist(), ["OMIM0000"])
        finally:
            shutil.rmtree(tempDir)


if __name__ == '__main__':
    unittest.main()
