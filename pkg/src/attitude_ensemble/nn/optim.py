"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfigError, ShapeError


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfigError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidConfigError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise InvalidConfigError("epsilon must be > 0")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidConfigError("batch_size must be an integer >= 1")


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, cfg: OptimizerConfig, t: int | None = None):
    """One Adam update at step ``t`` (1-based; defaults to ``state.t + 1``).

    Parameter and moment arrays are updated in place and also returned.
    """
    if t is None:
        t = state.t + 1
    if t < 1:
        raise ValueError(f"step t must be >= 1, got {t}")
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.m[i].shape != p.shape:
            raise ShapeError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    state.t = t
    return params, state
