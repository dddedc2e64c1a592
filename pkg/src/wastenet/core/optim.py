"""Gradient-descent optimizers over ParamSets.

Only trainable entries are ever touched; frozen tensors stay bit-identical
no matter how many steps run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind: {self.kind!r}")


@dataclass
class Optimizer:
    """SGD or Adam with per-parameter state keyed by name."""

    config: OptimizerConfig = field(default_factory=OptimizerConfig)
    _m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _t: int = 0

    def step(self, params: ParamSet, grads: dict[str, np.ndarray] | None = None) -> ParamSet:
        """Apply one update. Gradients default to each tensor's grad buffer."""
        cfg = self.config
        updates = []
        for name, p in params.items():
            if not p.requires_grad:
                continue
            g = grads.get(name) if grads is not None else p.grad
            if g is None:
                raise ValueError(f"missing gradient for trainable parameter {name!r}")
            g = np.asarray(g, dtype=p.dtype)
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {name!r} shape {p.data.shape}")
            updates.append((name, p, g))

        self._t += 1
        if cfg.kind == "sgd":
            for _, p, g in updates:
                p.data -= cfg.lr * g
        else:
            b1, b2 = cfg.betas
            bc1 = 1.0 - b1 ** self._t
            bc2 = 1.0 - b2 ** self._t
            for name, p, g in updates:
                m = self._m.get(name)
                v = self._v.get(name)
                if m is None:
                    m = np.zeros_like(p.data)
                    v = np.zeros_like(p.data)
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * (g * g)
                self._m[name] = m
                self._v[name] = v
                p.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        return params


def optimizer_step(params: ParamSet, grads: dict[str, np.ndarray], config: OptimizerConfig) -> ParamSet:
    """One-shot update (fresh optimizer state); training loops keep an Optimizer."""
    return Optimizer(config).step(params, grads)
