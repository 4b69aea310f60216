"""Adam with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        state = cls(**hyper)
        state.first_moment = [np.zeros(p.shape) for p in params]
        state.second_moment = [np.zeros(p.shape) for p in params]
        return state


def adam_step(params: list[Tensor], grads: list, state: AdamState) -> tuple[list[Tensor], AdamState]:
    """One in-place Adam update.

    ``grads[i]`` may be an array, a Tensor, or None (treated as zero). Weight
    decay is applied as ``p -= lr * wd * p`` before the moment update.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and moments must have equal length")
    state.step_count += 1
    t = state.step_count
    lr = state.learning_rate
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = grads[i]
        if g is None:
            g = np.zeros(p.shape)
        elif isinstance(g, Tensor):
            g = g.data
        m, v = state.first_moment[i], state.second_moment[i]
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}: {p.shape} vs grad {g.shape}")
        if state.weight_decay:
            p.data -= lr * state.weight_decay * p.data
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
