#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Evaluation: ranking metrics, the k-fold cross-validation harness, the
new-drug (cold start) protocol, a similarity nearest-neighbour baseline and
validation grid search
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from joblib import Parallel, delayed
from sklearn.metrics import average_precision_score, roc_auc_score

from dataset import (AssociationMatrix, DrugDiseaseDataset, TrainingView, make_fold_plan,
                     make_new_drug_split, make_training_view)
from errors import ConfigError, LeakageError, MetricError, TrainingError
from hamn_model import train
from numerics import derive_seed, make_rng
from train_config import TrainConfig, grid_size, iter_grid

logger = logging.getLogger(__name__)

HR_CUTOFFS = (1, 5, 10)
METRIC_COLUMNS = ["auc", "aupr", "hr1", "hr5", "hr10"]
REPORT_COLUMNS = ["fold"] + METRIC_COLUMNS + ["train_seconds"]
METHODS = ("hamn", "knn")


class ScoredPair(NamedTuple):
    drug: int
    disease: int
    score: float
    label: int


PairsLike = Union[Sequence[ScoredPair], np.ndarray]


def _unpack(pairs: PairsLike, labels: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    if labels is None:
        scores = np.array([p.score for p in pairs], dtype=np.float64)
        labels = np.array([p.label for p in pairs], dtype=np.int64)
    else:
        scores = np.asarray(pairs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise MetricError("Scores must be finite")
    return scores, labels


def auc(pairs: PairsLike, labels: Optional[np.ndarray] = None) -> float:
    """
    Area under the ROC curve

    Accepts a sequence of ScoredPair, or parallel score and label arrays.
    Tied scores count one half.
    """
    scores, labels = _unpack(pairs, labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise MetricError(f"AUC needs both classes, got {n_pos} positives out of {len(labels)}")
    return float(roc_auc_score(labels, scores))


def aupr(pairs: PairsLike, labels: Optional[np.ndarray] = None) -> float:
    """Average precision; tied scores enter the precision-recall sweep together"""
    scores, labels = _unpack(pairs, labels)
    if labels.sum() == 0:
        raise MetricError("AUPR needs at least one positive")
    return float(average_precision_score(labels, scores))


def hit_ratio(ranks: Sequence[int], n: int) -> float:
    """Fraction of ranks that are at most n"""
    if n < 1:
        raise ConfigError(f"Hit ratio cutoff must be at least 1, got {n}")
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise MetricError("Hit ratio of an empty rank list")
    return float(np.mean(ranks <= n))


def rank_positions(scores: np.ndarray, assoc: AssociationMatrix, test_pairs: np.ndarray) -> np.ndarray:
    """
    Rank of every held-out positive (i, j) among its candidates

    Candidates are j and every disease with no known association to drug i.
    Rank = 1 + #(higher scores) + #(equal scores at a smaller disease index).
    """
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    columns = np.arange(assoc.n_diseases)
    ranks = np.empty(len(test_pairs), dtype=np.int64)
    for k, (i, j) in enumerate(test_pairs):
        row = scores[i]
        candidates = assoc.values[i] == 0
        s = row[j]
        ahead = candidates & ((row > s) | ((row == s) & (columns < j)))
        ranks[k] = 1 + int(ahead.sum())
    return ranks


def score_test_cells(scores: np.ndarray, assoc: AssociationMatrix,
                     test_positives: np.ndarray, cells: np.ndarray) -> Dict[str, float]:
    """AUC and AUPR over the masked cells, HR@n over the held-out positives"""
    labels = assoc.values[cells].astype(np.int64)
    ranks = rank_positions(scores, assoc, test_positives)
    metrics = {"auc": auc(scores[cells], labels), "aupr": aupr(scores[cells], labels)}
    for n in HR_CUTOFFS:
        metrics[f"hr{n}"] = hit_ratio(ranks, n)
    return metrics


def scored_cells(assoc: AssociationMatrix, test_pairs: np.ndarray,
                 drugs: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Boolean mask of the cells a protocol scores

    Every unknown pair plus the held-out positives; with ``drugs`` the mask
    is cut down to those drugs' rows.
    """
    cells = assoc.values == 0
    cells[test_pairs[:, 0], test_pairs[:, 1]] = True
    if drugs is not None:
        rows = np.zeros(assoc.n_drugs, dtype=bool)
        rows[list(drugs)] = True
        cells &= rows[:, None]
    return cells


def assert_no_leakage(view: TrainingView, test_pairs: np.ndarray) -> None:
    """Raise LeakageError if a held-out positive is visible to training"""
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    n_diseases = view.n_diseases
    trained_on = np.isin(test_pairs[:, 0] * n_diseases + test_pairs[:, 1],
                         view.train_pairs[:, 0] * n_diseases + view.train_pairs[:, 1])
    in_matrix = view.train_matrix[test_pairs[:, 0], test_pairs[:, 1]] != 0
    in_index = view.index.matrix[test_pairs[:, 0], test_pairs[:, 1]]
    leaked = test_pairs[trained_on | in_matrix | in_index]
    if len(leaked):
        i, j = leaked[0]
        raise LeakageError(f"{len(leaked)} held-out associations reached training, first ({i}, {j})")


def nearest_neighbor_scores(view: TrainingView, k: int = 10) -> np.ndarray:
    """
    Similarity-weighted k-nearest-neighbour scores

    Drug i's score for disease j is the similarity-weighted share of its k
    most similar other drugs that are known to treat j.
    """
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    sim = np.array(view.drug_sim, dtype=np.float64)
    np.fill_diagonal(sim, -np.inf)
    k = min(k, view.n_drugs - 1)
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    weights = np.zeros_like(sim)
    rows = np.arange(view.n_drugs)[:, None]
    weights[rows, order] = view.drug_sim[rows, order]
    totals = weights.sum(axis=1, keepdims=True)
    numer = weights @ view.train_matrix
    return np.divide(numer, totals, out=np.zeros_like(numer), where=totals > 0)


def _fit_and_score(view: TrainingView, config: TrainConfig, method: str,
                   view_spec: Optional[Dict[str, Any]] = None) -> Tuple[np.ndarray, float]:
    start = time.perf_counter()
    if method == "hamn":
        scores = train(view, config, view_spec=view_spec).model.score_matrix()
    elif method == "knn":
        scores = nearest_neighbor_scores(view)
    else:
        raise ConfigError(f"Unknown method '{method}', expected one of {METHODS}")
    return scores, time.perf_counter() - start


@dataclass
class MetricsReport:
    """Per-fold metrics of one protocol run with the mean row and the run echo"""

    scenario: str
    rows: List[Dict[str, float]]
    config: TrainConfig
    seed: int
    fingerprint: Dict[str, int]
    method: str = "hamn"
    info: Dict[str, Any] = field(default_factory=dict)

    def mean(self) -> Dict[str, float]:
        return {c: float(np.mean([r[c] for r in self.rows])) for c in METRIC_COLUMNS + ["train_seconds"]}

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows, columns=REPORT_COLUMNS)
        mean_row = {"fold": "mean", **self.mean()}
        df["fold"] = df["fold"].astype(str)
        return pd.concat([df, pd.DataFrame([mean_row], columns=REPORT_COLUMNS)], ignore_index=True)

    def write_csv(self, path: str) -> None:
        _make_parent(path)
        self.to_frame().to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        logger.info(f"Metrics written to {path}")

    def write_run_card(self, path: str, command: Optional[str] = None) -> str:
        """Write ``<stem>.config.yaml`` next to ``path``; returns the card path"""
        card = run_card_path(path)
        write_run_card(card, self.config, self.seed, self.fingerprint, command,
                       extra={"scenario": self.scenario, "method": self.method, **self.info})
        return card


def _make_parent(path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def run_card_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".config.yaml"


def write_run_card(path: str, config: TrainConfig, seed: int, fingerprint: Mapping[str, int],
                   command: Optional[str] = None, extra: Optional[Mapping[str, Any]] = None) -> None:
    """YAML echo of everything needed to reproduce an artifact"""
    card = {"command": command, "seed": int(seed), "dataset": dict(fingerprint),
            "config": config.to_dict()}
    if extra:
        card.update(extra)
    _make_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(card, f, sort_keys=False)


def _cv_fold(dataset: DrugDiseaseDataset, config: TrainConfig, k: int, seed: int,
             fold: int, method: str, timing: bool) -> Dict[str, float]:
    plan = make_fold_plan(dataset.assoc, k, seed)
    test_pairs = plan.test_pairs(fold)
    view = make_training_view(dataset, plan.train_pairs(fold))
    assert_no_leakage(view, test_pairs)

    fold_config = config.replace(seed=derive_seed(seed, "fold", fold))
    try:
        scores, seconds = _fit_and_score(view, fold_config, method,
                                         {"scenario": "fold", "fold": fold, "k": k, "seed": seed})
    except TrainingError as e:
        raise e.with_fold(fold) from e

    metrics = score_test_cells(scores, dataset.assoc, test_pairs, scored_cells(dataset.assoc, test_pairs))
    logger.info(f"Fold {fold + 1}/{k} - AUC: {metrics['auc']:.4f} - AUPR: {metrics['aupr']:.4f} - "
                f"HR@10: {metrics['hr10']:.4f} - {seconds:.1f}s")
    return {"fold": fold, **metrics, "train_seconds": seconds if timing else 0.0}


def cross_validate(dataset: DrugDiseaseDataset,
                   config: TrainConfig,
                   k: int = 10,
                   seed: Optional[int] = None,
                   jobs: int = 1,
                   method: str = "hamn",
                   timing: bool = True) -> MetricsReport:
    """
    k-fold cross-validation over the known associations

    Each fold trains on the other k-1 folds; its test set is the held-out
    positives plus every unknown pair. Folds run in parallel with ``jobs``
    workers and are reported in fold order.

    Args:
        dataset: Full dataset
        config: Hyperparameters shared by every fold
        k: Number of folds
        seed: Seed of the fold plan and of each fold's training stream
            (defaults to config.seed)
        jobs: joblib worker count
        method: "hamn" or the "knn" baseline
        timing: Record wall time; False writes zeros for reproducible files

    Returns:
        MetricsReport with one row per fold
    """
    seed = config.seed if seed is None else seed
    make_fold_plan(dataset.assoc, k, seed)
    logger.info(f"{k}-fold cross-validation of {method} on {dataset.name} (seed {seed})")
    rows = Parallel(n_jobs=jobs)(
        delayed(_cv_fold)(dataset, config, k, seed, fold, method, timing) for fold in range(k))
    report = MetricsReport(scenario="cv", rows=list(rows), config=config, seed=seed,
                           fingerprint=dataset.fingerprint(), method=method, info={"folds": k})
    mean = report.mean()
    logger.info(f"Mean AUC: {mean['auc']:.4f} - AUPR: {mean['aupr']:.4f} - HR@10: {mean['hr10']:.4f}")
    return report


def evaluate_new_drug(dataset: DrugDiseaseDataset,
                      config: TrainConfig,
                      seed: Optional[int] = None,
                      method: str = "hamn",
                      timing: bool = True,
                      drug_rows_only: bool = False) -> MetricsReport:
    """
    Cold-start protocol: drugs with exactly one known association are held out

    Their rows are empty in the training matrix and excluded from negative
    sampling. Scoring follows cross_validate: the held-out associations
    against every unknown pair. ``drug_rows_only`` restricts the unknown
    pairs to the test drugs' rows.
    """
    seed = config.seed if seed is None else seed
    split = make_new_drug_split(dataset.assoc)
    if not split.test_drugs:
        raise ConfigError(f"New-drug split of {dataset.name} is empty")

    view = make_training_view(dataset, split.train_pairs, excluded_drugs=split.test_drugs)
    assert_no_leakage(view, split.test_pairs)
    scores, seconds = _fit_and_score(view, config.replace(seed=seed), method, {"scenario": "new-drug"})

    cells = scored_cells(dataset.assoc, split.test_pairs, split.test_drugs if drug_rows_only else None)
    metrics = score_test_cells(scores, dataset.assoc, split.test_pairs, cells)
    logger.info(f"New-drug test set: {len(split.test_drugs)} drugs - AUC: {metrics['auc']:.4f} - "
                f"HR@10: {metrics['hr10']:.4f}")
    row = {"fold": 0, **metrics, "train_seconds": seconds if timing else 0.0}
    return MetricsReport(scenario="new-drug", rows=[row], config=config, seed=seed,
                         fingerprint=dataset.fingerprint(), method=method,
                         info={"test_drugs": len(split.test_drugs), "scored_cells": int(cells.sum())})


def validation_split(assoc: AssociationMatrix, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Hold out a seeded fraction of the known associations as a validation set"""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"Validation fraction must be in (0, 1), got {fraction}")
    pairs = assoc.positive_pairs()
    n_val = max(1, int(round(fraction * len(pairs))))
    if n_val >= len(pairs):
        raise ConfigError(f"Cannot hold out {n_val} of {len(pairs)} known associations")
    order = make_rng(derive_seed(seed, "validation")).permutation(len(pairs))
    return pairs[np.sort(order[n_val:])], pairs[np.sort(order[:n_val])]


def _grid_point(dataset: DrugDiseaseDataset, view: TrainingView, val_pairs: np.ndarray,
                config: TrainConfig, combo: Dict[str, Any], index: int) -> Dict[str, Any]:
    scores, seconds = _fit_and_score(view, config, "hamn")
    metrics = score_test_cells(scores, dataset.assoc, val_pairs, scored_cells(dataset.assoc, val_pairs))
    logger.info(f"Grid point {index + 1}: {combo} - validation AUC {metrics['auc']:.4f}")
    return {**combo, "val_auc": metrics["auc"], "val_aupr": metrics["aupr"], "val_hr10": metrics["hr10"]}


def grid_search(dataset: DrugDiseaseDataset,
                base_config: TrainConfig,
                grid: Mapping[str, Sequence[Any]],
                seed: Optional[int] = None,
                validation_fraction: float = 0.1,
                jobs: int = 1) -> pd.DataFrame:
    """
    Score every grid combination on a nested validation holdout

    Returns:
        Leaderboard sorted by validation AUC (descending), ties kept in
        combination order
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("Grid is empty")
    seed = base_config.seed if seed is None else seed
    train_pairs, val_pairs = validation_split(dataset.assoc, validation_fraction, seed)
    view = make_training_view(dataset, train_pairs)
    assert_no_leakage(view, val_pairs)

    combos = list(iter_grid(grid))
    configs = [base_config.replace(**combo, seed=seed) for combo in combos]
    logger.info(f"Grid search over {grid_size(grid)} combinations, {len(val_pairs)} validation associations")
    rows = Parallel(n_jobs=jobs)(
        delayed(_grid_point)(dataset, view, val_pairs, cfg, combo, idx)
        for idx, (cfg, combo) in enumerate(zip(configs, combos)))
    board = pd.DataFrame(rows)
    board = board.sort_values("val_auc", ascending=False, kind="mergesort").reset_index(drop=True)
    board.insert(0, "rank", np.arange(1, len(board) + 1))
    return board


def ranked_predictions(scores: np.ndarray, dataset: DrugDiseaseDataset,
                       drug: Optional[int] = None, top: Optional[int] = None) -> pd.DataFrame:
    """
    Unknown pairs ranked by score (descending; ties by drug then disease index)

    Known associations never appear.
    """
    assoc = dataset.assoc
    rows, cols = np.nonzero(assoc.values == 0)
    if drug is not None:
        keep = rows == drug
        rows, cols = rows[keep], cols[keep]
    values = scores[rows, cols]
    order = np.lexsort((cols, rows, -values))
    if top is not None:
        order = order[:top]
    return pd.DataFrame({
        "drug_id": [assoc.drug_ids[i] for i in rows[order]],
        "disease_id": [assoc.disease_ids[j] for j in cols[order]],
        "score": values[order],
    })


def write_ranked_predictions(scores: np.ndarray, dataset: DrugDiseaseDataset, path: str,
                             drug: Optional[int] = None, top: Optional[int] = None) -> pd.DataFrame:
    df = ranked_predictions(scores, dataset, drug=drug, top=top)
    _make_parent(path)
    df.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")
    logger.info(f"{len(df)} ranked predictions written to {path}")
    return df
