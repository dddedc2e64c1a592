"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParamSet
from .tensor import Tensor

# Coordinates where both gradients sit below this scale are compared
# against the floor instead of each other, so numeric dust on dead paths
# does not register as relative error.
REL_ERROR_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    passed: bool = False
    tolerance: float = 1e-4


def _rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), REL_ERROR_FLOOR)


def grad_check(
    forward: Callable[[ParamSet], Tensor],
    params: ParamSet,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords_per_param: int = 32,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences.

    `forward` must be a deterministic pure function of the ParamSet that
    returns a scalar loss tensor. Large tensors are subsampled with a fixed
    seed; frozen entries are skipped entirely.
    """
    base_a = float(forward(params).data)
    base_b = float(forward(params).data)
    if base_a != base_b:
        raise ValueError("forward function is not deterministic; gradient check would be invalid")

    if not any(True for _ in params.trainable_items()):
        return GradCheckReport(max_rel_error=0.0, per_param={}, passed=True, tolerance=tolerance)

    params.zero_grad()
    loss = forward(params)
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.trainable_items()}

    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    for name, t in params.trainable_items():
        size = t.data.size
        if size > max_coords_per_param:
            coords = np.sort(rng.choice(size, size=max_coords_per_param, replace=False))
        else:
            coords = np.arange(size)
        flat = t.data.reshape(-1)
        worst = 0.0
        for i in coords:
            orig = flat[i].copy()
            flat[i] = orig + epsilon
            plus = float(forward(params).data)
            flat[i] = orig - epsilon
            minus = float(forward(params).data)
            flat[i] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            worst = max(worst, _rel_error(float(analytic[name].reshape(-1)[i]), fd))
        per_param[name] = worst

    max_err = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(
        max_rel_error=max_err,
        per_param=per_param,
        passed=max_err < tolerance,
        tolerance=tolerance,
    )
