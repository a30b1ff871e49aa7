"""Adam with bias correction and a step-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from hqnoise.errors import TrainingError
from hqnoise.nn.layers import Parameter


def adam_step(param: Parameter, lr, beta1=0.9, beta2=0.999, eps=1e-8, step=1):
    """Apply one bias-corrected Adam update to ``param`` in place.

    The caller is responsible for clearing ``param.grad`` afterwards.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise TrainingError("non-finite gradient")
    param.m *= beta1
    param.m += (1.0 - beta1) * g
    param.v *= beta2
    param.v += (1.0 - beta2) * g * g
    m_hat = param.m / (1.0 - beta1**step)
    v_hat = param.v / (1.0 - beta2**step)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self):
        self.t += 1
        for p in self.params:
            adam_step(p, self.lr, self.beta1, self.beta2, self.eps, self.t)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def step_decay_lr(base_lr, epoch, decay=0.8, every=200):
    """Learning rate for a zero-based ``epoch`` under step decay.

    >>> round(step_decay_lr(3e-4, 400), 9)
    0.000192
    """
    return base_lr * decay ** (epoch // every)
