"""Finite-difference verification of the autodiff engine."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tape, Tensor, backward

__all__ = ["grad_check"]


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor,
               eps: float = 1e-3, tol: float = 1e-3) -> float:
    """Compare backward() against central differences, coordinate by coordinate.

    ``f`` must map ``x`` to a scalar tensor and be smooth at ``x`` (keep
    inputs away from activation kinks). Returns the max relative error with
    denominator max(|analytic|, |numeric|, 1e-6); callers assert against
    ``tol``. Probe ``x`` in float64 so the finite differences themselves sit
    well below the tolerance.
    """
    x.requires_grad = True
    x.grad = None
    with Tape() as tape:
        y = f(x)
    if y.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued f")
    backward(y, tape)
    if x.grad is None:
        raise ValueError("f does not depend on x (no gradient reached it)")
    analytic = np.array(x.grad, dtype=np.float64, copy=True)

    flat = x.data.reshape(-1)
    numeric = np.empty(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x).data.reshape(()))
        flat[i] = orig - eps
        f_minus = float(f(x).data.reshape(()))
        flat[i] = orig
        numeric[i] = (f_plus - f_minus) / (2.0 * eps)

    a = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
    rel = np.abs(a - numeric) / denom
    return float(rel.max())
