"""Adaptive moment estimation with bias correction.

Defaults: beta1=0.9, beta2=0.999, eps=1e-8. The step leaves gradients
untouched; callers reset them explicitly between steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter optimizer state (first/second moment running averages)."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.0002

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ConfigurationError(
                f"epsilon and learning_rate must be positive: {self.epsilon}, {self.learning_rate}"
            )


def adam_step(params: dict[str, Tensor], states: dict[str, AdamState]) -> None:
    """Apply one bias-corrected update to every named parameter in place."""
    for name, p in params.items():
        state = states.get(name)
        if state is None:
            raise ContractError(f"no optimizer state for parameter {name!r}")
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        g = p.grad
        state.step += 1
        t = state.step
        state.m *= state.beta1
        state.m += (1.0 - state.beta1) * g
        state.v *= state.beta2
        state.v += (1.0 - state.beta2) * (g * g)
        m_hat = state.m / (1.0 - state.beta1**t)
        v_hat = state.v / (1.0 - state.beta2**t)
        p.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(
            p.dtype, copy=False
        )


@dataclass
class Adam:
    """Optimizer bound to a named parameter set."""

    params: dict[str, Tensor]
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: dict[str, AdamState] = field(init=False)

    def __post_init__(self):
        self.states = {
            name: AdamState(
                m=np.zeros_like(p.data),
                v=np.zeros_like(p.data),
                beta1=self.beta1,
                beta2=self.beta2,
                epsilon=self.epsilon,
                learning_rate=self.lr,
            )
            for name, p in self.params.items()
        }

    def step(self) -> None:
        adam_step(self.params, self.states)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
