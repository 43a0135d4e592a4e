"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step_count: int = 0
    # name prefix -> L2 coefficient added to the gradient
    weight_decay: dict = field(default_factory=dict)

    def decay_for(self, name: str) -> float:
        for prefix, coef in self.weight_decay.items():
            if name == prefix or name.startswith(prefix + "."):
                return coef
        return 0.0


def adam_step(params, grads: dict, state: AdamState, names=None):
    """Apply one Adam update to ``params`` in place and advance ``state``.

    ``names`` defaults to every key of ``grads``.  Each listed parameter
    must have a populated gradient.
    """
    names = list(grads) if names is None else list(names)
    for n in names:
        if grads.get(n) is None:
            raise ContractViolation(f"adam_step: no gradient for parameter {n!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for n in names:
        p = params[n]
        g = grads[n]
        wd = state.decay_for(n)
        if wd:
            g = g + wd * p.data
        m = state.m.get(n)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[n] = np.zeros_like(p.data)
        v = state.v[n]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[n], state.v[n] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params.assign(n, (p.data - update).astype(p.dtype, copy=False))


class Adam:
    """Stateful wrapper: ``step()`` reads ``.grad`` off the named parameters."""

    def __init__(self, params, names=None, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=None):
        self.params = params
        self.names = list(params.trainable_names() if names is None else names)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                               weight_decay=dict(weight_decay or {}))

    def zero_grad(self):
        for n in self.names:
            self.params[n].grad = None

    def step(self):
        # parameters off the active graph are skipped, as in common frameworks
        grads = {n: self.params[n].grad for n in self.names if self.params[n].grad is not None}
        if grads:
            adam_step(self.params, grads, self.state)
