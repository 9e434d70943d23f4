#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Drug-disease datasets: loading and validating the association matrix and the
two similarity matrices, fold plans, the new-drug split, negative sampling
and the neighbour index read by the attention module

File layout (no headers): a matrix file of whitespace-delimited numbers, one
row per line, plus one identifier file per axis, one id per line.
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ConfigError, DataFormatError, SamplingError
from numerics import make_rng

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-9


def _read_matrix(path: str) -> np.ndarray:
    """Read a whitespace-delimited numeric matrix (LF or CRLF)"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Matrix file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=np.float64,
                            float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"Matrix file {path} is empty")
    except (ValueError, pd.errors.ParserError) as e:
        raise DataFormatError(f"Could not parse {path} as a numeric matrix: {e}")

    values = frame.to_numpy(dtype=np.float64)
    if np.isnan(values).any():
        row, col = np.argwhere(np.isnan(values))[0]
        raise DataFormatError(f"{path}: row {row} is missing a value at column {col}")
    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(f"{path}: non-finite value at row {row}, column {col}")
    return values


def _read_ids(path: str) -> Tuple[str, ...]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Identifier file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return tuple(line.strip() for line in lines)


def _check_ids(ids: Sequence[str], what: str) -> None:
    seen = set()
    for position, identifier in enumerate(ids):
        if not identifier:
            raise DataFormatError(f"{what} identifier at line {position} is empty")
        if identifier in seen:
            raise DataFormatError(f"Duplicate {what} identifier '{identifier}' at line {position}")
        seen.add(identifier)


def save_matrix(values: np.ndarray, path: str, integer: bool = False) -> None:
    """Write a matrix in canonical form (integers as %d, reals as %.17g)"""
    fmt = "%d" if integer else "%.17g"
    np.savetxt(path, np.asarray(values), fmt=fmt, delimiter=" ", newline="\n")


def save_ids(ids: Iterable[str], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for identifier in ids:
            f.write(f"{identifier}\n")


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    """Binary drug x disease matrix R; row i is s_i^drug, column j is s_j^disease"""

    drug_ids: Tuple[str, ...]
    disease_ids: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DataFormatError(f"Association matrix must be 2-D, got shape {values.shape}")
        m, n = values.shape
        if len(self.drug_ids) != m or len(self.disease_ids) != n:
            raise DataFormatError(
                f"Association matrix is {m}x{n} but there are {len(self.drug_ids)} drug ids "
                f"and {len(self.disease_ids)} disease ids"
            )
        _check_ids(self.drug_ids, "drug")
        _check_ids(self.disease_ids, "disease")

        invalid = (values != 0) & (values != 1)
        if invalid.any():
            row, col = np.argwhere(invalid)[0]
            raise DataFormatError(
                f"Association value {values[row, col]!r} at row {row}, column {col} is not 0 or 1"
            )
        if not values.any():
            raise DataFormatError("Association matrix has no known associations")

        frozen = values.astype(np.uint8)
        frozen.setflags(write=False)
        object.__setattr__(self, "values", frozen)
        object.__setattr__(self, "drug_ids", tuple(self.drug_ids))
        object.__setattr__(self, "disease_ids", tuple(self.disease_ids))

    @property
    def n_drugs(self) -> int:
        return self.values.shape[0]

    @property
    def n_diseases(self) -> int:
        return self.values.shape[1]

    @property
    def n_positives(self) -> int:
        return int(self.values.sum())

    @property
    def sparsity(self) -> float:
        """Fraction of cells holding a known association"""
        return self.n_positives / float(self.n_drugs * self.n_diseases)

    def positive_pairs(self) -> np.ndarray:
        """Known associations R+ as a (P, 2) array in row-major order"""
        return np.argwhere(self.values == 1)

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1).astype(np.int64)

    def drug_index(self, drug_id: str) -> int:
        try:
            return self.drug_ids.index(drug_id)
        except ValueError:
            raise KeyError(f"Unknown drug id: {drug_id}")


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Square DrugSim or DiseaseSim matrix with entries in [0, 1]"""

    ids: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DataFormatError(f"Similarity matrix must be square, got shape {values.shape}")
        if len(self.ids) != values.shape[0]:
            raise DataFormatError(
                f"Similarity matrix has {values.shape[0]} rows but {len(self.ids)} ids"
            )
        _check_ids(self.ids, "similarity")

        outside = (values < 0.0) | (values > 1.0)
        if outside.any():
            row, col = np.argwhere(outside)[0]
            raise DataFormatError(
                f"Similarity value {values[row, col]!r} at row {row}, column {col} is outside [0, 1]"
            )
        asym = np.abs(values - values.T) > SYMMETRY_TOLERANCE
        if asym.any():
            row, col = np.argwhere(asym)[0]
            raise DataFormatError(
                f"Similarity matrix is asymmetric at ({row}, {col}): "
                f"{values[row, col]!r} vs {values[col, row]!r}"
            )
        diag = np.abs(np.diag(values) - 1.0) > SYMMETRY_TOLERANCE
        if diag.any():
            row = int(np.argmax(diag))
            raise DataFormatError(f"Self-similarity at row {row} is {values[row, row]!r}, expected 1.0")

        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def size(self) -> int:
        return self.values.shape[0]


def load_association_matrix(matrix_path: str, drug_ids_path: str, disease_ids_path: str) -> AssociationMatrix:
    """
    Load and validate the drug-disease association matrix

    Args:
        matrix_path: m x n matrix of 0/1 values
        drug_ids_path: m drug identifiers, one per line
        disease_ids_path: n disease identifiers, one per line

    Returns:
        Validated AssociationMatrix
    """
    values = _read_matrix(matrix_path)
    drug_ids = _read_ids(drug_ids_path)
    disease_ids = _read_ids(disease_ids_path)
    assoc = AssociationMatrix(drug_ids, disease_ids, values)
    logger.info(
        f"Loaded associations {matrix_path}: {assoc.n_drugs} drugs, {assoc.n_diseases} diseases, "
        f"{assoc.n_positives} known associations"
    )
    return assoc


def load_similarity_matrix(matrix_path: str, ids_path: str) -> SimilarityMatrix:
    """Load and validate a drug-drug or disease-disease similarity matrix"""
    return SimilarityMatrix(_read_ids(ids_path), _read_matrix(matrix_path))


@dataclass(frozen=True, eq=False)
class DrugDiseaseDataset:
    """Association matrix plus the two similarity matrices, aligned by id"""

    assoc: AssociationMatrix
    drug_sim: SimilarityMatrix
    disease_sim: SimilarityMatrix
    name: str = "dataset"

    def __post_init__(self):
        if self.drug_sim.ids != self.assoc.drug_ids:
            raise DataFormatError("Drug similarity ids do not match the association matrix drug ids")
        if self.disease_sim.ids != self.assoc.disease_ids:
            raise DataFormatError("Disease similarity ids do not match the association matrix disease ids")

    def fingerprint(self) -> Dict[str, int]:
        return {
            "drugs": self.assoc.n_drugs,
            "diseases": self.assoc.n_diseases,
            "positives": self.assoc.n_positives,
        }


def load_dataset(assoc_path: str,
                 drug_ids_path: str,
                 disease_ids_path: str,
                 drug_sim_path: str,
                 disease_sim_path: str,
                 name: Optional[str] = None) -> DrugDiseaseDataset:
    """Load the three matrices of one dataset (similarities reuse the association id files)"""
    assoc = load_association_matrix(assoc_path, drug_ids_path, disease_ids_path)
    drug_sim = load_similarity_matrix(drug_sim_path, drug_ids_path)
    disease_sim = load_similarity_matrix(disease_sim_path, disease_ids_path)
    return DrugDiseaseDataset(assoc, drug_sim, disease_sim,
                              name=name or os.path.basename(os.path.dirname(os.path.abspath(assoc_path))))


def dataset_statistics(dataset: DrugDiseaseDataset) -> Dict[str, float]:
    """Drugs, diseases, interactions, sparsity and single-association drugs"""
    assoc = dataset.assoc
    return {
        "drugs": assoc.n_drugs,
        "diseases": assoc.n_diseases,
        "interactions": assoc.n_positives,
        "sparsity": assoc.sparsity,
        "single_association_drugs": int((assoc.row_sums() == 1).sum()),
    }


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of every known association to one of k folds"""

    k: int
    seed: int
    pairs: np.ndarray
    folds: np.ndarray

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.folds, minlength=self.k).tolist()

    def test_pairs(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return self.pairs[self.folds == fold]

    def train_pairs(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return self.pairs[self.folds != fold]

    def assignments(self) -> Dict[Tuple[int, int], int]:
        return {(int(i), int(j)): int(f) for (i, j), f in zip(self.pairs, self.folds)}

    def _check_fold(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise ConfigError(f"Fold {fold} out of range for a {self.k}-fold plan")


def make_fold_plan(assoc: AssociationMatrix, k: int, seed: int) -> FoldPlan:
    """
    Deal a seeded permutation of the known associations round-robin into k folds

    Args:
        assoc: Full association matrix
        k: Number of folds (>= 2)
        seed: Seed of the permutation

    Returns:
        FoldPlan whose fold sizes differ by at most one
    """
    pairs = assoc.positive_pairs()
    if k < 2:
        raise ConfigError(f"Fold count must be at least 2, got {k}")
    if k > len(pairs):
        raise ConfigError(f"Cannot make {k} folds from {len(pairs)} known associations")

    order = make_rng(seed).permutation(len(pairs))
    folds = np.empty(len(pairs), dtype=np.int64)
    folds[order] = np.arange(len(pairs)) % k
    return FoldPlan(k=k, seed=seed, pairs=pairs, folds=folds)


@dataclass(frozen=True, eq=False)
class NewDrugSplit:
    """Drugs with exactly one known association are held out with that association"""

    test_drugs: Tuple[int, ...]
    train_pairs: np.ndarray
    test_pairs: np.ndarray


def make_new_drug_split(assoc: AssociationMatrix) -> NewDrugSplit:
    """Hold out every drug whose association row sums to one"""
    test_drugs = np.flatnonzero(assoc.row_sums() == 1)
    pairs = assoc.positive_pairs()
    is_test = np.isin(pairs[:, 0], test_drugs)
    if len(test_drugs) == 0:
        logger.warning("New-drug split is empty: no drug has exactly one known association")
    else:
        logger.info(f"New-drug split: {len(test_drugs)} test drugs, {int((~is_test).sum())} training associations")
    return NewDrugSplit(test_drugs=tuple(int(i) for i in test_drugs),
                        train_pairs=pairs[~is_test],
                        test_pairs=pairs[is_test])


def sample_negatives(assoc: AssociationMatrix,
                     train_pairs: np.ndarray,
                     ratio: int,
                     seed: int,
                     excluded_drugs: Iterable[int] = ()) -> np.ndarray:
    """
    Draw ratio * |train_pairs| unknown pairs uniformly, with replacement

    Cells with R = 1 anywhere in the full dataset are rejected, so neither
    training nor held-out positives can be drawn. Rows of ``excluded_drugs``
    are never drawn.

    Returns:
        (ratio * |train_pairs|, 2) array of (drug, disease) indices
    """
    if ratio < 1:
        raise ConfigError(f"Negative ratio must be at least 1, got {ratio}")
    requested = int(ratio) * len(train_pairs)

    allowed = assoc.values == 0
    excluded = list(excluded_drugs)
    if excluded:
        allowed = allowed.copy()
        allowed[excluded, :] = False
    allowed = allowed.ravel()
    available = int(allowed.sum())
    if available < requested:
        raise SamplingError(f"Requested {requested} negatives but only {available} unknown pairs are available")
    if requested == 0:
        return np.empty((0, 2), dtype=np.int64)

    rng = make_rng(seed)
    n_cells = allowed.size
    collected: List[np.ndarray] = []
    have = 0
    while have < requested:
        draw = rng.integers(0, n_cells, size=2 * (requested - have) + 16)
        keep = draw[allowed[draw]]
        collected.append(keep)
        have += len(keep)
    flat = np.concatenate(collected)[:requested]
    rows, cols = np.divmod(flat, assoc.n_diseases)
    return np.stack([rows, cols], axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """Per-disease drug lists N(j) built from training positives only"""

    n_drugs: int
    neighbors: Tuple[np.ndarray, ...]
    matrix: np.ndarray = field(repr=False)

    @classmethod
    def from_pairs(cls, pairs: np.ndarray, n_drugs: int, n_diseases: int) -> "NeighborIndex":
        matrix = np.zeros((n_drugs, n_diseases), dtype=bool)
        if len(pairs):
            matrix[pairs[:, 0], pairs[:, 1]] = True
        matrix.setflags(write=False)
        neighbors = tuple(np.flatnonzero(matrix[:, j]) for j in range(n_diseases))
        return cls(n_drugs=n_drugs, neighbors=neighbors, matrix=matrix)

    @property
    def n_diseases(self) -> int:
        return len(self.neighbors)


def neighbor_set(index: NeighborIndex, j: int, i: int) -> List[int]:
    """
    N(j) without drug i, in ascending order

    The target drug is left out so a known pair never attends to itself.
    """
    if not 0 <= j < index.n_diseases:
        raise IndexError(f"Disease index {j} out of range [0, {index.n_diseases})")
    drugs = index.neighbors[j]
    return [int(n) for n in drugs if n != i]


@dataclass(frozen=True, eq=False)
class TrainingView:
    """What a model may see while training on one split"""

    dataset: DrugDiseaseDataset
    train_pairs: np.ndarray
    train_matrix: np.ndarray = field(repr=False)
    index: NeighborIndex = field(repr=False)
    excluded_drugs: FrozenSet[int] = frozenset()

    @property
    def assoc(self) -> AssociationMatrix:
        return self.dataset.assoc

    @property
    def n_drugs(self) -> int:
        return self.assoc.n_drugs

    @property
    def n_diseases(self) -> int:
        return self.assoc.n_diseases

    @property
    def drug_sim(self) -> np.ndarray:
        return self.dataset.drug_sim.values

    @property
    def disease_sim(self) -> np.ndarray:
        return self.dataset.disease_sim.values


def make_training_view(dataset: DrugDiseaseDataset,
                       train_pairs: np.ndarray,
                       excluded_drugs: Iterable[int] = ()) -> TrainingView:
    """Mask every association outside ``train_pairs`` and index the rest"""
    m, n = dataset.assoc.n_drugs, dataset.assoc.n_diseases
    train_pairs = np.asarray(train_pairs, dtype=np.int64).reshape(-1, 2)
    train_matrix = np.zeros((m, n), dtype=np.float64)
    if len(train_pairs):
        train_matrix[train_pairs[:, 0], train_pairs[:, 1]] = 1.0
    train_matrix.setflags(write=False)
    index = NeighborIndex.from_pairs(train_pairs, m, n)
    orphans = [j for j, drugs in enumerate(index.neighbors) if len(drugs) == 0]
    if orphans:
        logger.warning(f"{len(orphans)} of {n} diseases have no training neighbours; "
                       f"their memory read is empty (first: {dataset.assoc.disease_ids[orphans[0]]})")
    return TrainingView(dataset=dataset,
                        train_pairs=train_pairs,
                        train_matrix=train_matrix,
                        index=index,
                        excluded_drugs=frozenset(int(i) for i in excluded_drugs))


def full_training_view(dataset: DrugDiseaseDataset) -> TrainingView:
    return make_training_view(dataset, dataset.assoc.positive_pairs())


def _block_similarity(labels: np.ndarray, within: float, between: float,
                      jitter: float, rng: np.random.Generator) -> np.ndarray:
    same = labels[:, None] == labels[None, :]
    sim = np.where(same, within, between) + rng.uniform(-jitter, jitter, size=same.shape)
    sim = np.clip((sim + sim.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def make_planted_block_dataset(n_drugs: int = 20,
                               n_diseases: int = 15,
                               n_blocks: int = 3,
                               within_density: float = 0.8,
                               seed: int = 0) -> DrugDiseaseDataset:
    """
    Synthetic dataset with planted block structure

    Drugs and diseases are dealt round-robin into ``n_blocks`` groups; a drug
    is associated with a disease of its own group with probability
    ``within_density`` and never with other groups. Similarities are high
    inside a group and low across groups.
    """
    rng = make_rng(seed)
    drug_blocks = np.arange(n_drugs) % n_blocks
    disease_blocks = np.arange(n_diseases) % n_blocks

    same = drug_blocks[:, None] == disease_blocks[None, :]
    values = (same & (rng.random((n_drugs, n_diseases)) < within_density)).astype(np.uint8)
    # every drug keeps at least one association inside its block
    for i in range(n_drugs):
        if not values[i].any():
            values[i, rng.choice(np.flatnonzero(same[i]))] = 1

    drug_ids = tuple(f"D{i:03d}" for i in range(n_drugs))
    disease_ids = tuple(f"P{j:03d}" for j in range(n_diseases))
    assoc = AssociationMatrix(drug_ids, disease_ids, values)
    drug_sim = SimilarityMatrix(drug_ids, _block_similarity(drug_blocks, 0.75, 0.1, 0.05, rng))
    disease_sim = SimilarityMatrix(disease_ids, _block_similarity(disease_blocks, 0.75, 0.1, 0.05, rng))
    return DrugDiseaseDataset(assoc, drug_sim, disease_sim, name="planted-block")


def training_view_for(dataset: DrugDiseaseDataset,
                      scenario: str = "full",
                      fold: Optional[int] = None,
                      k: int = 10,
                      seed: int = 42) -> TrainingView:
    """
    Rebuild a training view from its description

    Args:
        dataset: Full dataset
        scenario: "full" (every association), "fold" (all folds but ``fold``
            of a k-fold plan seeded with ``seed``) or "new-drug"
        fold: Held-out fold for the "fold" scenario

    Returns:
        TrainingView
    """
    if scenario == "full":
        return full_training_view(dataset)
    if scenario == "fold":
        if fold is None:
            raise ConfigError("The fold scenario needs a fold number")
        plan = make_fold_plan(dataset.assoc, k, seed)
        return make_training_view(dataset, plan.train_pairs(fold))
    if scenario == "new-drug":
        split = make_new_drug_split(dataset.assoc)
        return make_training_view(dataset, split.train_pairs, excluded_drugs=split.test_drugs)
    raise ConfigError(f"Unknown training scenario '{scenario}'")
