"""
Finite-difference oracle for checking analytic gradients.
"""

import logging
from typing import Callable, Union

import numpy as np

from .tensor import Tensor

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Tensor], Union[Tensor, float]]


def _scalar(value: Union[Tensor, float]) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def finite_diff_grad(f: ScalarFn, x: Tensor, h: float = 1e-5) -> Tensor:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Deterministic function of one tensor returning a scalar
        x: Point of evaluation
        h: Step size, must be positive

    Returns:
        Tensor shaped like x holding (f(x + h e_i) - f(x - h e_i)) / 2h
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    base = x.numpy().reshape(-1)
    grad = np.zeros_like(base)
    for i in range(base.size):
        shifted = base.copy()
        shifted[i] = base[i] + h
        f_plus = _scalar(f(Tensor(shifted.reshape(x.shape))))
        shifted[i] = base[i] - h
        f_minus = _scalar(f(Tensor(shifted.reshape(x.shape))))
        grad[i] = (f_plus - f_minus) / (2 * h)
    return Tensor(grad.reshape(x.shape))


def relative_error(analytic: Union[Tensor, np.ndarray], numeric: Union[Tensor, np.ndarray]) -> float:
    """||a - b|| / (||a|| + ||b||), with 0 when both vanish."""
    a = analytic.data if isinstance(analytic, Tensor) else np.asarray(analytic, dtype=np.float64)
    b = numeric.data if isinstance(numeric, Tensor) else np.asarray(numeric, dtype=np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / max(denom, 1e-300))
