#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exception hierarchy for the HAMN drug repositioning toolkit
"""

from typing import Optional


class HAMNError(Exception):
    """Base class for every error raised by this package"""


class DataFormatError(HAMNError, ValueError):
    """Malformed matrix or identifier file"""


class CheckpointError(DataFormatError):
    """Checkpoint does not match the dataset it is loaded against"""


class ConfigError(HAMNError, ValueError):
    """Invalid hyperparameter, split or harness configuration"""


class DimensionError(HAMNError, ValueError):
    """Shapes do not agree"""


class NumericError(HAMNError, ValueError):
    """NaN or Inf reached an API boundary"""


class SamplingError(HAMNError, RuntimeError):
    """Negative sampling cannot satisfy the request"""


class CheckError(HAMNError, RuntimeError):
    """Gradient check could not be carried out"""


class MetricError(HAMNError, ValueError):
    """Metric is undefined for the given pairs"""


class LeakageError(HAMNError, AssertionError):
    """A held-out positive reached a training structure"""


class TrainingError(HAMNError, RuntimeError):
    """Training diverged"""

    def __init__(self, message: str, epoch: int, fold: Optional[int] = None):
        self.epoch = epoch
        self.fold = fold
        where = f"epoch {epoch}" if fold is None else f"fold {fold}, epoch {epoch}"
        super().__init__(f"{message} ({where})")
        self.message = message

    def __reduce__(self):
        # joblib workers send exceptions back pickled
        return TrainingError, (self.message, self.epoch, self.fold)

    def with_fold(self, fold: int) -> "TrainingError":
        """Return a copy of this error that also names the fold"""
        return TrainingError(self.message, self.epoch, fold)
