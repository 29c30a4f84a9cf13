"""Adam with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(named_params, state):
    """Apply one Adam update in place to ``(name, Parameter)`` pairs.

    Parameters without a gradient are skipped. A non-finite gradient rejects
    the whole step before anything is modified.
    """
    named_params = [(n, p) for n, p in named_params if p.requires_grad and p.grad is not None]
    for name, p in named_params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for {name}; step rejected")
        m = state.first_moment.get(name)
        if m is not None and m.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {m.shape}, parameter {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2, lr = state.beta1, state.beta2, state.learning_rate
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in named_params:
        g = p.grad.astype(p.dtype, copy=False)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = (p.data - lr * update).astype(p.dtype, copy=False)
    return state
