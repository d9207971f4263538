from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, as_tensor, reduce_sum, scale, square, sub


def mse_loss(pred: Tensor, target, normalizer: float) -> Tensor:
    """Squared error summed over the batch and all components, divided by ``normalizer``.

    With ``normalizer`` equal to the component count this is the per-sample
    mean squared error summed over the batch.
    """
    target = as_tensor(np.asarray(target.data if isinstance(target, Tensor) else target,
                                  dtype=pred.data.dtype))
    if pred.shape != target.shape:
        raise DimensionError("mse_loss", pred.shape, target.shape)
    if normalizer <= 0:
        raise ValueError("normalizer must be positive")
    return scale(reduce_sum(square(sub(pred, target))), 1.0 / normalizer)


def per_sample_mse(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Component-averaged squared error for every sample, in float64."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError("per_sample_mse", target.shape, pred.shape)
    diff = (pred - target).reshape(len(pred), -1)
    return np.mean(diff * diff, axis=1)
