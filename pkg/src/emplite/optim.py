"""Adam with bias correction.

Gradients are cleared at the end of every step, never implicitly in the
backward pass, so accumulation across multiple uses of a parameter stays
observable in tests.
"""

import numpy as np

from .errors import TrainingIntegrityError


class Adam:
    """Standard Adam over a dict of named parameter tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            if not p.requires_grad:
                continue
            if p.grad is None:
                raise TrainingIntegrityError(f"parameter {name!r} has no gradient")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.grad = None

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
