"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_size(cls, n: int, lr: float = 0.001, **kwargs) -> "AdamState":
        return cls(lr=lr, m=np.zeros(n), v=np.zeros(n), **kwargs)


def adam_update(state: AdamState, values: np.ndarray, grad: np.ndarray) -> None:
    """One in-place Adam step on the flat parameter vector ``values``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != values.shape or state.m.shape != values.shape:
        raise ValueError(
            f"shape mismatch: params {values.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise FloatingPointError(f"non-finite gradient at coordinate {bad}")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
