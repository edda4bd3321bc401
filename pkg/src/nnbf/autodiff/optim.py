"""AdamW with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adamw_step(state, params):
    """One AdamW update of ``params`` in place using their ``.grad``.

    Weight decay is applied first (``w -= lr * wd * w``), then the
    bias-corrected Adam step ``w -= lr * m_hat / (sqrt(v_hat) + eps)``.
    """
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {i} ({p.name or 'unnamed'}) has no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ContractError("optimizer state does not match parameter list")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    lr = state.lr
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    """Optimizer object wrapping ``AdamWState`` around a fixed parameter list."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def step(self):
        adamw_step(self.state, self.params)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
