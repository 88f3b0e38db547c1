"""Adam optimizer over Tensor parameters."""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor


class AdamState:
    """First/second moment estimates plus step counter for one parameter."""

    def __init__(self, param: Tensor, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros_like(param.data)
        self.v = np.zeros_like(param.data)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(param: Tensor, state: AdamState) -> None:
    """One bias-corrected Adam update in place."""
    if param.grad is None:
        raise ContractError("adam_step called on a parameter with no gradient")
    g = param.grad
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * (g * g)
    mhat = state.m / (1 - state.beta1 ** state.t)
    vhat = state.v / (1 - state.beta2 ** state.t)
    param.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


class Adam:
    """Convenience wrapper stepping a fixed list of parameters together."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.states = [AdamState(p, lr, beta1, beta2, eps) for p in self.params]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            if p.grad is None:  # unused parameter this step
                continue
            adam_step(p, s)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
