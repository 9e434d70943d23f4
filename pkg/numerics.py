#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Numerical building blocks: activations, seeded random streams and the
finite-difference gradient checker that certifies the hand-written
backpropagation in hamn_model.py
"""

import logging
from typing import Any, Callable, Dict, Mapping, Union

import numpy as np

from errors import CheckError, ConfigError, DimensionError, NumericError

logger = logging.getLogger(__name__)

# Largest double below 1.0 and smallest normal double; sigmoid outputs are
# kept inside these so the open interval (0, 1) holds in float64.
_SIGMOID_HIGH = 1.0 - 2.0 ** -53
_SIGMOID_LOW = np.finfo(np.float64).tiny

TensorMap = Mapping[str, np.ndarray]


def as_finite(values: Any, name: str = "array") -> np.ndarray:
    """
    Convert input to a float64 array and reject NaN / Inf

    Args:
        values: Anything numpy can turn into an array
        name: Label used in the error message

    Returns:
        float64 ndarray
    """
    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        bad = np.argwhere(~np.isfinite(array))[0]
        raise NumericError(f"{name} contains a non-finite value at index {tuple(bad.tolist())}")
    return array


def softmax(v: Any) -> np.ndarray:
    """
    Numerically stable softmax of a vector

    Args:
        v: Nonempty finite vector

    Returns:
        Probability vector of the same length
    """
    x = as_finite(v, "softmax input")
    if x.ndim != 1 or x.size == 0:
        raise DimensionError(f"softmax expects a nonempty vector, got shape {x.shape}")
    e = np.exp(x - x.max())
    return e / e.sum()


def sigmoid(x: Any) -> Union[float, np.ndarray]:
    """Logistic function, overflow-free for any finite input"""
    arr = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = np.clip(out, _SIGMOID_LOW, _SIGMOID_HIGH)
    if out.ndim == 0:
        return float(out)
    return out


def make_rng(seed: int) -> np.random.Generator:
    """
    Seeded generator with a pinned bit generator (PCG64)

    numpy guarantees the PCG64 stream for a given seed is identical on every
    platform, so folds, negative samples and checkpoints reproduce.
    """
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """
    Derive an independent child seed from a base seed and a key path

    Example: derive_seed(42, "fold", 3) names the stream of fold 3.
    """
    entropy = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            entropy.extend(key.encode("utf-8"))
        else:
            entropy.append(int(key))
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _tensor_map(obj: Any) -> Dict[str, np.ndarray]:
    if hasattr(obj, "tensors"):
        return obj.tensors()
    return dict(obj)


def finite_diff_report(loss: Callable[[Any], float],
                       params: Any,
                       analytic_grad: Any,
                       eps: float = 1e-5,
                       max_coords: int = 200,
                       seed: int = 0) -> Dict[str, float]:
    """
    Compare analytic gradients with central differences, tensor by tensor

    Args:
        loss: Deterministic scalar function of ``params``
        params: Mapping name -> array, or an object exposing ``tensors()``;
            arrays are perturbed in place and restored
        analytic_grad: Same structure as ``params``
        eps: Perturbation size, in (0, 1e-2]
        max_coords: Coordinates sampled per tensor
        seed: Seed for the coordinate sample

    Returns:
        Max relative error per tensor name
    """
    if not 0.0 < eps <= 1e-2:
        raise ConfigError(f"eps must be in (0, 1e-2], got {eps}")

    tensors = _tensor_map(params)
    grads = _tensor_map(analytic_grad)

    base = loss(params)
    if loss(params) != base:
        raise CheckError("loss is not deterministic: two evaluations at the same point differ")

    rng = make_rng(seed)
    report = {}
    for name, tensor in tensors.items():
        if name not in grads:
            raise CheckError(f"no analytic gradient supplied for {name}")
        grad = np.asarray(grads[name])
        if grad.shape != tensor.shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, expected {tensor.shape}")
        if tensor.size == 0:
            continue

        if tensor.size > max_coords:
            coords = rng.choice(tensor.size, size=max_coords, replace=False)
        else:
            coords = np.arange(tensor.size)

        worst = 0.0
        flat = tensor.reshape(-1)
        for c in coords:
            original = flat[c]
            flat[c] = original + eps
            plus = loss(params)
            flat[c] = original - eps
            minus = loss(params)
            flat[c] = original

            fd = (plus - minus) / (2.0 * eps)
            an = float(grad.reshape(-1)[c])
            err = abs(fd - an) / max(1e-8, abs(fd) + abs(an))
            worst = max(worst, err)
        report[name] = worst

    if loss(params) != base:
        raise CheckError("parameters were not restored after the check")
    return report


def finite_diff_check(loss: Callable[[Any], float],
                      params: Any,
                      analytic_grad: Any,
                      eps: float = 1e-5,
                      max_coords: int = 200,
                      seed: int = 0,
                      tolerance: float = 1e-4) -> float:
    """
    Max relative error between analytic and central-difference gradients

    Tensors whose error exceeds ``tolerance`` are logged as warnings.
    """
    report = finite_diff_report(loss, params, analytic_grad, eps=eps,
                                max_coords=max_coords, seed=seed)
    for name, err in report.items():
        if err > tolerance:
            logger.warning(f"Gradient check failed for {name}: relative error {err:.3e}")
    return max(report.values(), default=0.0)
