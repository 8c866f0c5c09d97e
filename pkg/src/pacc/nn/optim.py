"""Adam with a staircase learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class LearningRateSchedule:
    initial: float = 1e-3
    decay: float = 0.5
    interval: int = 10_000

    def __call__(self, step: int) -> float:
        """Rate for 0-based ``step``: initial * decay ** (step // interval)."""
        return self.initial * self.decay ** (step // self.interval)


@dataclass
class AdamState:
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # per-parameter update counts, used for bias correction
    n: dict[str, int] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        return self.schedule(self.t)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None], state: AdamState) -> float:
    """Update ``params`` in place and return the learning rate used.

    A parameter whose gradient is missing or all zero is left alone, moments
    included, so zero gradients never move weights. Non-finite gradients
    raise before anything is modified.
    """
    for name, g in grads.items():
        if g is None:
            continue
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    lr = state.lr
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        if g is None or not g.any():
            continue
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        k = state.n.get(name, 0) + 1
        state.n[name] = k
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1**k)
        v_hat = v / (1 - b2**k)
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    state.t += 1
    return lr
