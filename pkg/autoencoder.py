#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Denoising autoencoder with side information: mines a drug (or disease) latent factor
from a corrupted association row together with a corrupted similarity row,
and reconstructs both clean rows

    latent     = sigmoid(W1 s~ + V1 sim~ + b_enc)
    s_hat      = sigmoid(W2 latent + b_s)
    sim_hat    = sigmoid(V2 latent + b_D)

The drug side reads rows of R and DrugSim; the disease side reads columns of
R and rows of DiseaseSim with the same code.
"""

import logging
from dataclasses import dataclass, fields
from typing import Dict, Tuple

import numpy as np

from errors import DimensionError
from numerics import as_finite, sigmoid

logger = logging.getLogger(__name__)

LatentFactor = np.ndarray

INIT_SCALE = 0.05


@dataclass(eq=False)
class AutoencoderParams:
    """Weights of one autoencoder side (drug or disease)"""

    W1: np.ndarray    # d x n_assoc
    V1: np.ndarray    # d x n_sim
    b_enc: np.ndarray  # d
    W2: np.ndarray    # n_assoc x d
    b_s: np.ndarray   # n_assoc
    V2: np.ndarray    # n_sim x d
    b_D: np.ndarray   # n_sim

    @classmethod
    def initialize(cls, n_assoc: int, n_sim: int, d: int, rng: np.random.Generator,
                   scale: float = INIT_SCALE) -> "AutoencoderParams":
        """Uniform [-scale, scale] weights, zero biases"""
        return cls(
            W1=rng.uniform(-scale, scale, size=(d, n_assoc)),
            V1=rng.uniform(-scale, scale, size=(d, n_sim)),
            b_enc=np.zeros(d),
            W2=rng.uniform(-scale, scale, size=(n_assoc, d)),
            b_s=np.zeros(n_assoc),
            V2=rng.uniform(-scale, scale, size=(n_sim, d)),
            b_D=np.zeros(n_sim),
        )

    @classmethod
    def zeros(cls, n_assoc: int, n_sim: int, d: int) -> "AutoencoderParams":
        return cls(W1=np.zeros((d, n_assoc)), V1=np.zeros((d, n_sim)), b_enc=np.zeros(d),
                   W2=np.zeros((n_assoc, d)), b_s=np.zeros(n_assoc),
                   V2=np.zeros((n_sim, d)), b_D=np.zeros(n_sim))

    def zeros_like(self) -> "AutoencoderParams":
        return AutoencoderParams.zeros(self.n_assoc, self.n_sim, self.latent_dim)

    @property
    def latent_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def n_assoc(self) -> int:
        return self.W1.shape[1]

    @property
    def n_sim(self) -> int:
        return self.V1.shape[1]

    def tensors(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def regularizer(self) -> float:
        """Sum of squared Frobenius norms of the weight matrices (biases excluded)"""
        return float(np.sum(self.W1 ** 2) + np.sum(self.V1 ** 2)
                     + np.sum(self.W2 ** 2) + np.sum(self.V2 ** 2))


def corrupt(row: np.ndarray, noise_level: float, rng: np.random.Generator) -> np.ndarray:
    """
    Masking noise: each entry is zeroed independently with probability noise_level

    Works on a single row or a block of rows.
    """
    if not 0.0 <= noise_level <= 1.0:
        raise ValueError(f"noise_level must be in [0, 1], got {noise_level}")
    row = np.asarray(row, dtype=np.float64)
    keep = rng.random(row.shape) >= noise_level
    return row * keep


def _check_width(x: np.ndarray, width: int, what: str) -> None:
    if x.shape[-1] != width:
        raise DimensionError(f"{what} has length {x.shape[-1]}, expected {width}")


def encode(assoc_row: np.ndarray, sim_row: np.ndarray, params: AutoencoderParams) -> LatentFactor:
    """
    Latent factor of one row (or a block of rows)

    Args:
        assoc_row: Association row(s), length n_assoc
        sim_row: Similarity row(s), length n_sim
        params: Autoencoder weights of the matching side

    Returns:
        Latent vector(s) with entries in (0, 1)
    """
    s = as_finite(assoc_row, "association row")
    sim = as_finite(sim_row, "similarity row")
    _check_width(s, params.n_assoc, "association row")
    _check_width(sim, params.n_sim, "similarity row")
    if s.shape[:-1] != sim.shape[:-1]:
        raise DimensionError(f"association rows {s.shape} and similarity rows {sim.shape} do not pair up")
    return sigmoid(s @ params.W1.T + sim @ params.V1.T + params.b_enc)


def decode(latent: LatentFactor, params: AutoencoderParams) -> Tuple[np.ndarray, np.ndarray]:
    """Reconstructed association row(s) and similarity row(s)"""
    z = as_finite(latent, "latent factor")
    _check_width(z, params.latent_dim, "latent factor")
    assoc_recon = sigmoid(z @ params.W2.T + params.b_s)
    sim_recon = sigmoid(z @ params.V2.T + params.b_D)
    return assoc_recon, sim_recon


def ae_loss(assoc_row: np.ndarray,
            sim_row: np.ndarray,
            recon: Tuple[np.ndarray, np.ndarray],
            params: AutoencoderParams,
            alpha: float,
            lam: float) -> float:
    """
    Denoising reconstruction loss against the clean inputs

        alpha * ||s - s_hat||^2 + (1 - alpha) * ||sim - sim_hat||^2 + lam * reg

    On a block of rows the squared errors are summed over rows and the
    regulariser is added once.
    """
    assoc_recon, sim_recon = recon
    s = np.asarray(assoc_row, dtype=np.float64)
    sim = np.asarray(sim_row, dtype=np.float64)
    if s.shape != np.shape(assoc_recon) or sim.shape != np.shape(sim_recon):
        raise DimensionError("reconstruction shapes do not match the inputs")
    assoc_err = float(np.sum((s - assoc_recon) ** 2))
    sim_err = float(np.sum((sim - sim_recon) ** 2))
    return alpha * assoc_err + (1.0 - alpha) * sim_err + lam * params.regularizer()


def ae_loss_backward(assoc_rows: np.ndarray,
                     sim_rows: np.ndarray,
                     recon: Tuple[np.ndarray, np.ndarray],
                     latent: np.ndarray,
                     params: AutoencoderParams,
                     alpha: float,
                     lam: float,
                     weight: float,
                     grads: AutoencoderParams) -> np.ndarray:
    """
    Accumulate gradients of weight * ae_loss into ``grads``

    Returns:
        Gradient with respect to the latent block
    """
    assoc_recon, sim_recon = recon
    d_assoc = weight * -2.0 * alpha * (assoc_rows - assoc_recon) * assoc_recon * (1.0 - assoc_recon)
    d_sim = weight * -2.0 * (1.0 - alpha) * (sim_rows - sim_recon) * sim_recon * (1.0 - sim_recon)

    grads.W2 += d_assoc.T @ latent
    grads.b_s += d_assoc.sum(axis=0)
    grads.V2 += d_sim.T @ latent
    grads.b_D += d_sim.sum(axis=0)

    reg = weight * 2.0 * lam
    grads.W1 += reg * params.W1
    grads.V1 += reg * params.V1
    grads.W2 += reg * params.W2
    grads.V2 += reg * params.V2

    return d_assoc @ params.W2 + d_sim @ params.V2


def encode_backward(d_latent: np.ndarray,
                    latent: np.ndarray,
                    assoc_in: np.ndarray,
                    sim_in: np.ndarray,
                    grads: AutoencoderParams) -> None:
    """Push a latent-block gradient through the sigmoid encoder into ``grads``"""
    d_pre = d_latent * latent * (1.0 - latent)
    grads.W1 += d_pre.T @ assoc_in
    grads.V1 += d_pre.T @ sim_in
    grads.b_enc += d_pre.sum(axis=0)
