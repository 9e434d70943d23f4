#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Neighbourhood contribution of a (drug, disease) pair

The target drug attends over the drugs already associated with the disease,
N(j) without the target itself, and reads their rows from an external memory
table:

    p_n = <drug_i, drug_n>
    q   = softmax(p) over n in N(j)
    o   = sum_n q_n * c_n

Per-pair functions serve prediction and inspection; ``masked_attention`` does
the same over a minibatch with a neighbour mask and is what the trainer uses.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from errors import DimensionError
from numerics import as_finite, softmax

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MemoryTable:
    """External memory: row n is the embedding c_n of drug n as a neighbour"""

    rows: np.ndarray  # m x l

    @classmethod
    def initialize(cls, n_drugs: int, memory_dim: int, rng: np.random.Generator,
                   scale: float = 0.05) -> "MemoryTable":
        return cls(rows=rng.uniform(-scale, scale, size=(n_drugs, memory_dim)))

    @property
    def n_drugs(self) -> int:
        return self.rows.shape[0]

    @property
    def memory_dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True, eq=False)
class AttentionRecord:
    """One attention read: neighbours, their preferences p, weights q and output o"""

    neighbors: Tuple[int, ...]
    p: np.ndarray
    q: np.ndarray
    o: np.ndarray


def preference_scores(target: np.ndarray, neighbors: Sequence[np.ndarray]) -> np.ndarray:
    """
    Inner product of the target latent with every neighbour latent

    Args:
        target: Target drug latent factor, length d
        neighbors: Neighbour latent factors (a list or an k x d block)

    Returns:
        Preference vector of length k
    """
    t = as_finite(target, "target latent")
    if len(neighbors) == 0:
        return np.zeros(0)
    block = as_finite(neighbors, "neighbour latents")
    if block.ndim != 2 or block.shape[1] != t.shape[-1]:
        raise DimensionError(f"neighbour latents of shape {block.shape} do not match target of length {t.shape[-1]}")
    return block @ t


def attention_weights(p: np.ndarray) -> np.ndarray:
    """Softmax of the preference vector over the neighbour axis (empty stays empty)"""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0)
    return softmax(p)


def neighborhood_representation(q: np.ndarray, memory: MemoryTable,
                                neighbor_idx: Sequence[int]) -> np.ndarray:
    """
    Attention-weighted sum of the neighbours' memory rows

    An empty neighbourhood yields the zero vector of length l.
    """
    q = np.asarray(q, dtype=np.float64)
    idx = np.asarray(neighbor_idx, dtype=np.int64)
    if q.shape != idx.shape:
        raise DimensionError(f"{q.size} attention weights for {idx.size} neighbours")
    if idx.size == 0:
        return np.zeros(memory.memory_dim)
    bad = (idx < 0) | (idx >= memory.n_drugs)
    if bad.any():
        raise IndexError(f"Neighbour index {int(idx[bad][0])} out of range [0, {memory.n_drugs})")
    return q @ memory.rows[idx]


def attend(target: np.ndarray,
           drug_latents: np.ndarray,
           memory: MemoryTable,
           neighbors: Sequence[int]) -> AttentionRecord:
    """Run one full attention read for a target drug over the given neighbours"""
    idx = tuple(int(n) for n in neighbors)
    p = preference_scores(target, drug_latents[list(idx)] if idx else [])
    q = attention_weights(p)
    o = neighborhood_representation(q, memory, idx)
    return AttentionRecord(neighbors=idx, p=p, q=q, o=o)


def masked_attention(query: np.ndarray,
                     latents: np.ndarray,
                     mask: np.ndarray,
                     memory_rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched attention over all drugs, restricted by a neighbour mask

    Args:
        query: B x d target latents
        latents: m x d latents of every drug
        mask: B x m boolean, True where drug n is a neighbour for row k
        memory_rows: m x l memory table

    Returns:
        (Q, O): B x m attention weights (zero outside the mask, all-zero rows
        for empty neighbourhoods) and the B x l outputs
    """
    scores = query @ latents.T
    scores = np.where(mask, scores, -np.inf)
    has_any = mask.any(axis=1)
    row_max = np.where(has_any, scores.max(axis=1, initial=-np.inf), 0.0)
    e = np.where(mask, np.exp(scores - row_max[:, None]), 0.0)
    denom = e.sum(axis=1)
    Q = np.divide(e, denom[:, None], out=np.zeros_like(e), where=denom[:, None] > 0)
    return Q, Q @ memory_rows


def masked_attention_backward(d_out: np.ndarray,
                              Q: np.ndarray,
                              query: np.ndarray,
                              latents: np.ndarray,
                              memory_rows: np.ndarray
                              ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of a scalar through ``masked_attention``

    Returns:
        (d_query, d_latents, d_memory_rows)
    """
    d_memory = Q.T @ d_out
    d_q = d_out @ memory_rows.T
    d_scores = Q * (d_q - np.sum(Q * d_q, axis=1, keepdims=True))
    d_query = d_scores @ latents
    d_latents = d_scores.T @ query
    return d_query, d_latents, d_memory


def neighbor_mask(train_matrix: np.ndarray, drugs: np.ndarray, diseases: np.ndarray,
                  exclude_self: bool = True) -> np.ndarray:
    """B x m mask of N(j_k) minus i_k for each pair (i_k, j_k)"""
    mask = train_matrix[:, diseases].T != 0
    if exclude_self:
        mask[np.arange(len(drugs)), drugs] = False
    return mask
