"""Mean squared error loss with analytic gradient."""

from __future__ import annotations

import numpy as np


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all elements of (pred - target)^2, plus d(loss)/d(pred).

    Returns:
        (loss, grad) with loss a Python float and grad = 2*(pred - target)/N
        in the dtype of ``pred``.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)
