#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
HAMN drug repositioning model

Two denoising autoencoders mine drug and disease latent factors from the
association and similarity rows. An attention read over the disease's known
drugs supplies a neighbourhood vector from an external memory, and both
signals are fused into a score

    r_hat = sigmoid(eta * h.(drug_i * disease_j) + (1 - eta) * w.o_ij + b)

All parameters are trained jointly by minibatch SGD on

    L = L_r + phi * L_d + psi * L_p

with gradients derived by hand and certified by numerics.finite_diff_check.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from autoencoder import (AutoencoderParams, ae_loss, ae_loss_backward, corrupt, decode,
                         encode, encode_backward)
from dataset import (DrugDiseaseDataset, TrainingView, neighbor_set, sample_negatives,
                     training_view_for)
from errors import CheckpointError, ConfigError, DimensionError, TrainingError
from neighborhood import (AttentionRecord, MemoryTable, attend, masked_attention,
                          masked_attention_backward, neighbor_mask)
from numerics import derive_seed, make_rng, sigmoid
from train_config import TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
PROB_CLIP = 1e-12
SCORE_CHUNK = 256


@dataclass(eq=False)
class FusionParams:
    """Fusion layer: latent weights h (d), neighbourhood weights w (l), bias b and the fixed eta"""

    h: np.ndarray
    w: np.ndarray
    b: np.ndarray  # shape (1,)
    eta: float

    @classmethod
    def initialize(cls, d: int, l: int, eta: float, rng: np.random.Generator,
                   scale: float = 0.05) -> "FusionParams":
        return cls(h=rng.uniform(-scale, scale, size=d),
                   w=rng.uniform(-scale, scale, size=l),
                   b=np.zeros(1),
                   eta=float(eta))

    def zeros_like(self) -> "FusionParams":
        return FusionParams(h=np.zeros_like(self.h), w=np.zeros_like(self.w),
                            b=np.zeros_like(self.b), eta=self.eta)

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"h": self.h, "w": self.w, "b": self.b}


@dataclass(eq=False)
class ModelParams:
    """Every learnable tensor of the model"""

    drug_ae: AutoencoderParams
    disease_ae: AutoencoderParams
    memory: MemoryTable
    fusion: FusionParams

    @classmethod
    def initialize(cls, n_drugs: int, n_diseases: int, config: TrainConfig,
                   rng: np.random.Generator) -> "ModelParams":
        """Seeded uniform [-0.05, 0.05] weights, zero biases"""
        d, l = config.latent_dim, config.memory_dim
        return cls(
            drug_ae=AutoencoderParams.initialize(n_diseases, n_drugs, d, rng),
            disease_ae=AutoencoderParams.initialize(n_drugs, n_diseases, d, rng),
            memory=MemoryTable.initialize(n_drugs, l, rng),
            fusion=FusionParams.initialize(d, l, config.eta, rng),
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(drug_ae=self.drug_ae.zeros_like(),
                           disease_ae=self.disease_ae.zeros_like(),
                           memory=MemoryTable(np.zeros_like(self.memory.rows)),
                           fusion=self.fusion.zeros_like())

    def copy(self) -> "ModelParams":
        clone = self.zeros_like()
        for name, tensor in self.tensors().items():
            clone.tensors()[name][...] = tensor
        return clone

    def tensors(self) -> Dict[str, np.ndarray]:
        """Flat name -> array view of every parameter; arrays are live, not copies"""
        out: Dict[str, np.ndarray] = {}
        for prefix, group in (("drug_ae", self.drug_ae.tensors()),
                              ("disease_ae", self.disease_ae.tensors()),
                              ("fusion", self.fusion.tensors())):
            for name, tensor in group.items():
                out[f"{prefix}.{name}"] = tensor
        out["memory.rows"] = self.memory.rows
        return out

    @property
    def dims(self) -> Dict[str, int]:
        return {"m": self.memory.n_drugs, "n": self.drug_ae.n_assoc,
                "d": self.drug_ae.latent_dim, "l": self.memory.memory_dim}


@dataclass(frozen=True, eq=False)
class Batch:
    """
    One SGD step's worth of data with its corruption frozen

    Drug inputs cover every drug since all of them take part in attention;
    disease inputs cover the distinct diseases of the batch.
    """

    pairs: np.ndarray
    labels: np.ndarray
    drug_assoc_in: np.ndarray = field(repr=False)
    drug_sim_in: np.ndarray = field(repr=False)
    diseases: np.ndarray = field(repr=False)
    disease_assoc_in: np.ndarray = field(repr=False)
    disease_sim_in: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.pairs)


def make_batch(view: TrainingView,
               pairs: np.ndarray,
               labels: np.ndarray,
               noise_level: float,
               rng: np.random.Generator) -> Batch:
    """Freeze the corrupted autoencoder inputs for a set of labelled pairs"""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.float64)
    if len(pairs) != len(labels):
        raise DimensionError(f"{len(pairs)} pairs but {len(labels)} labels")
    diseases = np.unique(pairs[:, 1])
    return Batch(
        pairs=pairs,
        labels=labels,
        drug_assoc_in=corrupt(view.train_matrix, noise_level, rng),
        drug_sim_in=corrupt(view.drug_sim, noise_level, rng),
        diseases=diseases,
        disease_assoc_in=corrupt(view.train_matrix[:, diseases].T, noise_level, rng),
        disease_sim_in=corrupt(view.disease_sim[diseases], noise_level, rng),
    )


def fuse(drug_latent: np.ndarray, disease_latent: np.ndarray, o: np.ndarray,
         fusion: FusionParams) -> float:
    """Score of one pair from its two latent factors and its neighbourhood vector"""
    eta = fusion.eta
    z = eta * float(fusion.h @ (np.asarray(drug_latent) * np.asarray(disease_latent)))
    z += (1.0 - eta) * float(fusion.w @ np.asarray(o)) + float(fusion.b[0])
    return sigmoid(z)


def binary_cross_entropy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Summed negative log-likelihood, predictions clipped to [1e-12, 1 - 1e-12]"""
    p = np.clip(np.asarray(predictions, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    r = np.asarray(labels, dtype=np.float64)
    return float(-np.sum(r * np.log(p) + (1.0 - r) * np.log(1.0 - p)))


class _Forward:
    """Intermediate values of one forward pass, kept for the backward pass"""

    def __init__(self, batch: Batch, params: ModelParams, view: TrainingView, config: TrainConfig):
        self.batch = batch
        drugs, diseases = batch.pairs[:, 0], batch.pairs[:, 1]
        self.drugs = drugs
        self.disease_pos = np.searchsorted(batch.diseases, diseases)

        self.U = encode(batch.drug_assoc_in, batch.drug_sim_in, params.drug_ae)
        self.V = encode(batch.disease_assoc_in, batch.disease_sim_in, params.disease_ae)
        self.Ui = self.U[drugs]
        self.Vj = self.V[self.disease_pos]

        mask = neighbor_mask(view.train_matrix, drugs, diseases)
        self.Q, self.O = masked_attention(self.Ui, self.U, mask, params.memory.rows)

        fusion = params.fusion
        self.eta = fusion.eta
        self.interaction = self.Ui * self.Vj
        z = self.eta * self.interaction @ fusion.h + (1.0 - self.eta) * self.O @ fusion.w + fusion.b[0]
        self.predictions = sigmoid(z)

        # reconstruction targets are the clean rows
        self.batch_drugs = np.unique(drugs)
        self.drug_targets = (view.train_matrix[self.batch_drugs], view.drug_sim[self.batch_drugs])
        self.drug_recon = decode(self.U[self.batch_drugs], params.drug_ae)
        self.disease_targets = (view.train_matrix[:, batch.diseases].T, view.disease_sim[batch.diseases])
        self.disease_recon = decode(self.V, params.disease_ae)

        self.loss_r = binary_cross_entropy(self.predictions, batch.labels)
        self.loss_d = ae_loss(*self.drug_targets, self.drug_recon, params.drug_ae, config.alpha, config.lam)
        self.loss_p = ae_loss(*self.disease_targets, self.disease_recon, params.disease_ae,
                              config.beta, config.delta)
        self.total = self.loss_r + config.phi * self.loss_d + config.psi * self.loss_p


def _empty_batch_check(batch: Batch) -> None:
    if len(batch) == 0:
        raise ConfigError("Cannot evaluate the loss of an empty batch")


def prediction_loss(batch: Batch, params: ModelParams, view: TrainingView,
                    config: Optional[TrainConfig] = None) -> float:
    """Cross-entropy part L_r of the objective"""
    _empty_batch_check(batch)
    return _Forward(batch, params, view, config or TrainConfig(eta=params.fusion.eta)).loss_r


def loss_terms(batch: Batch, params: ModelParams, view: TrainingView, config: TrainConfig) -> Dict[str, float]:
    """The three parts of the objective and their weighted total"""
    _empty_batch_check(batch)
    fwd = _Forward(batch, params, view, config)
    return {"prediction": fwd.loss_r, "drug_reconstruction": fwd.loss_d,
            "disease_reconstruction": fwd.loss_p, "total": fwd.total}


def total_loss(batch: Batch, params: ModelParams, view: TrainingView, config: TrainConfig) -> float:
    """L_r + phi * L_d + psi * L_p over one batch"""
    _empty_batch_check(batch)
    return _Forward(batch, params, view, config).total


def _backward(fwd: _Forward, params: ModelParams, config: TrainConfig) -> ModelParams:
    grads = params.zeros_like()
    batch = fwd.batch
    eta = fwd.eta
    h, w = params.fusion.h, params.fusion.w

    g = fwd.predictions - batch.labels
    grads.fusion.h[...] = eta * fwd.interaction.T @ g
    grads.fusion.w[...] = (1.0 - eta) * fwd.O.T @ g
    grads.fusion.b[0] = g.sum()

    d_ui = eta * g[:, None] * h[None, :] * fwd.Vj
    d_vj = eta * g[:, None] * h[None, :] * fwd.Ui
    d_o = (1.0 - eta) * g[:, None] * w[None, :]

    d_query, d_U, d_memory = masked_attention_backward(d_o, fwd.Q, fwd.Ui, fwd.U, params.memory.rows)
    grads.memory.rows[...] = d_memory
    np.add.at(d_U, fwd.drugs, d_query + d_ui)

    d_U[fwd.batch_drugs] += ae_loss_backward(*fwd.drug_targets, fwd.drug_recon, fwd.U[fwd.batch_drugs],
                                             params.drug_ae, config.alpha, config.lam, config.phi,
                                             grads.drug_ae)
    encode_backward(d_U, fwd.U, batch.drug_assoc_in, batch.drug_sim_in, grads.drug_ae)

    d_V = np.zeros_like(fwd.V)
    np.add.at(d_V, fwd.disease_pos, d_vj)
    d_V += ae_loss_backward(*fwd.disease_targets, fwd.disease_recon, fwd.V,
                            params.disease_ae, config.beta, config.delta, config.psi,
                            grads.disease_ae)
    encode_backward(d_V, fwd.V, batch.disease_assoc_in, batch.disease_sim_in, grads.disease_ae)
    return grads


def compute_gradients(batch: Batch, params: ModelParams, view: TrainingView,
                      config: TrainConfig) -> ModelParams:
    """
    Analytic gradient of total_loss with respect to every parameter

    Drug latents feed both the fusion term and the attention read, so their
    gradient collects both paths before flowing back through the encoder.

    Returns:
        Gradients in the shape of ``params``
    """
    _empty_batch_check(batch)
    return _backward(_Forward(batch, params, view, config), params, config)


def loss_and_gradients(batch: Batch, params: ModelParams, view: TrainingView,
                       config: TrainConfig) -> Tuple[float, ModelParams]:
    _empty_batch_check(batch)
    fwd = _Forward(batch, params, view, config)
    return fwd.total, _backward(fwd, params, config)


class HAMNModel:
    """
    Scorer over frozen parameters and the training view they were fit on

    Latents are encoded from clean rows; the neighbourhood of (i, j) is N(j)
    without drug i, read from the view's training matrix only.
    """

    def __init__(self, params: ModelParams, view: TrainingView):
        dims = params.dims
        if (dims["m"], dims["n"]) != (view.n_drugs, view.n_diseases):
            raise DimensionError(f"Parameters are sized {dims['m']}x{dims['n']} but the data is "
                                 f"{view.n_drugs}x{view.n_diseases}")
        self.params = params
        self.view = view

    def drug_latents(self) -> np.ndarray:
        return encode(self.view.train_matrix, self.view.drug_sim, self.params.drug_ae)

    def disease_latents(self) -> np.ndarray:
        return encode(self.view.train_matrix.T, self.view.disease_sim, self.params.disease_ae)

    def _check_pair(self, i: int, j: int) -> None:
        if not 0 <= i < self.view.n_drugs:
            raise IndexError(f"Drug index {i} out of range [0, {self.view.n_drugs})")
        if not 0 <= j < self.view.n_diseases:
            raise IndexError(f"Disease index {j} out of range [0, {self.view.n_diseases})")

    def attention(self, i: int, j: int) -> AttentionRecord:
        """Attention read of drug i over the neighbours of disease j"""
        self._check_pair(i, j)
        U = self.drug_latents()
        return attend(U[i], U, self.params.memory, neighbor_set(self.view.index, j, i))

    def predict(self, i: int, j: int) -> float:
        """Predicted association score of drug i with disease j, in (0, 1)"""
        self._check_pair(i, j)
        U = self.drug_latents()
        v = encode(self.view.train_matrix[:, j], self.view.disease_sim[j], self.params.disease_ae)
        record = attend(U[i], U, self.params.memory, neighbor_set(self.view.index, j, i))
        return fuse(U[i], v, record.o, self.params.fusion)

    def score_matrix(self, chunk: int = SCORE_CHUNK) -> np.ndarray:
        """
        Scores of every (drug, disease) pair

        The attention read of (i, j) only depends on i through its preference
        row, so each drug chunk shares one softmax numerator over all drugs
        and the per-disease neighbour sums reduce to products with R_train.
        """
        U = self.drug_latents()
        V = self.disease_latents()
        R = self.view.train_matrix
        fusion = self.params.fusion
        eta = fusion.eta
        memory_out = self.params.memory.rows @ fusion.w

        m = U.shape[0]
        scores = np.empty((m, V.shape[0]))
        for start in range(0, m, chunk):
            rows = np.arange(start, min(start + chunk, m))
            P = U[rows] @ U.T
            E = np.exp(P - P.max(axis=1, keepdims=True))
            E[np.arange(len(rows)), rows] = 0.0
            numer = (E * memory_out[None, :]) @ R
            denom = E @ R
            neighborhood = np.divide(numer, denom, out=np.zeros_like(numer), where=denom > 0)
            z = eta * (U[rows] * fusion.h[None, :]) @ V.T + (1.0 - eta) * neighborhood + fusion.b[0]
            scores[rows] = sigmoid(z)
        return scores


@dataclass(eq=False)
class TrainedModel:
    """Trained parameters with the config echo, the per-epoch loss trace and the view they fit"""

    params: ModelParams
    config: TrainConfig
    loss_trace: List[float]
    view: TrainingView = field(repr=False)
    view_spec: Dict[str, Any] = field(default_factory=lambda: {"scenario": "full"})

    @property
    def model(self) -> HAMNModel:
        return HAMNModel(self.params, self.view)


def _check_step(loss: float, grads: ModelParams, epoch: int) -> None:
    if not math.isfinite(loss):
        raise TrainingError(f"Training loss became {loss}", epoch)
    for name, grad in grads.tensors().items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"Non-finite gradient in {name}", epoch)


def train(view: TrainingView,
          config: TrainConfig,
          view_spec: Optional[Dict[str, Any]] = None) -> TrainedModel:
    """
    Fit a model on one training view by minibatch SGD

    Each epoch draws fresh negatives (neg_ratio per training positive),
    shuffles them with the positives and takes one step per minibatch with
    freshly corrupted autoencoder inputs. The loss trace holds the summed
    step losses of each epoch divided by the number of pairs seen.

    Args:
        view: Training matrix, neighbour index and similarities
        config: Hyperparameters
        view_spec: How ``view`` was built, echoed into checkpoints

    Returns:
        TrainedModel; identical seeds give bitwise-identical results
    """
    positives = view.train_pairs
    if len(positives) == 0:
        raise ConfigError("Training view has no known associations")

    params = ModelParams.initialize(view.n_drugs, view.n_diseases, config,
                                    make_rng(derive_seed(config.seed, "init")))
    tensors = params.tensors()
    trace: List[float] = []

    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        negatives = sample_negatives(view.assoc, positives, config.neg_ratio,
                                     derive_seed(config.seed, "negatives", epoch),
                                     excluded_drugs=sorted(view.excluded_drugs))
        pairs = np.concatenate([positives, negatives])
        labels = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])

        rng = make_rng(derive_seed(config.seed, "epoch", epoch))
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = make_batch(view, pairs[idx], labels[idx], config.noise_level, rng)
            loss, grads = loss_and_gradients(batch, params, view, config)
            _check_step(loss, grads, epoch)
            for name, grad in grads.tensors().items():
                tensors[name] -= lr * grad
            epoch_loss += loss

        trace.append(epoch_loss / len(pairs))
        logger.info(f"Epoch {epoch + 1}/{config.epochs} - loss: {trace[-1]:.6f} - lr: {lr:.6g}")

    return TrainedModel(params=params, config=config, loss_trace=trace, view=view,
                        view_spec=dict(view_spec or {"scenario": "full"}))


def save_checkpoint(trained: TrainedModel, path: str) -> None:
    """Write a self-describing JSON checkpoint"""
    dataset = trained.view.dataset
    document = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": trained.params.dims,
        "config": trained.config.to_dict(),
        "fingerprint": dataset.fingerprint(),
        "training_view": trained.view_spec,
        "loss_trace": [float(x) for x in trained.loss_trace],
        "params": {name: {"shape": list(t.shape), "values": t.ravel().tolist()}
                   for name, t in trained.params.tensors().items()},
    }
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f)
    logger.info(f"Checkpoint saved to {path}")


def load_checkpoint(path: str, dataset: DrugDiseaseDataset) -> TrainedModel:
    """
    Load a checkpoint against the dataset it was trained on

    The training view is rebuilt from the recorded scenario so scoring sees
    the same neighbourhoods as training did.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path} is not a valid checkpoint: {e}") from e

    version = document.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint format version {version} in {path}")
    if document.get("fingerprint") != dataset.fingerprint():
        raise CheckpointError(f"Checkpoint {path} was trained on {document.get('fingerprint')}, "
                              f"dataset is {dataset.fingerprint()}")

    try:
        config = TrainConfig.from_dict(document["config"])
        dims = document["dims"]
        stored = document["params"]
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path} is missing checkpoint field {e}") from e
    if (dims["m"], dims["n"]) != (dataset.assoc.n_drugs, dataset.assoc.n_diseases):
        raise CheckpointError(f"Checkpoint dims {dims} do not match the dataset")
    if (dims["d"], dims["l"]) != (config.latent_dim, config.memory_dim):
        raise CheckpointError(f"Checkpoint dims {dims} disagree with its config")

    params = ModelParams.initialize(dims["m"], dims["n"], config, make_rng(0))
    tensors = params.tensors()
    if set(stored) != set(tensors):
        raise CheckpointError(f"Checkpoint tensors {sorted(stored)} do not match the model")
    for name, tensor in tensors.items():
        entry = stored[name]
        if tuple(entry["shape"]) != tensor.shape:
            raise CheckpointError(f"{name} has shape {entry['shape']}, expected {list(tensor.shape)}")
        tensor[...] = np.asarray(entry["values"], dtype=np.float64).reshape(tensor.shape)

    spec = document.get("training_view", {"scenario": "full"})
    view = training_view_for(dataset, **spec)
    logger.info(f"Checkpoint loaded from {path}")
    return TrainedModel(params=params, config=config, loss_trace=list(document.get("loss_trace", [])),
                        view=view, view_spec=spec)
