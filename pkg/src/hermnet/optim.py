"""First-order optimizers over lists of leaf tensors."""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError, NumericError


class Optimizer:
    kind = "base"

    def __init__(self, params, lr):
        if not lr > 0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def reset(self):
        """Drop all moment buffers."""

    def _grads(self):
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {p.name or i}", op="optimizer_step")
            grads.append(g)
        return grads

    def step(self):
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr=0.1, momentum=0.0):
        super().__init__(params, lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    @property
    def kind(self):
        return "sgd_momentum" if self.momentum else "sgd"

    def reset(self):
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, g, v in zip(self.params, self._grads(), self.velocity):
            if self.momentum:
                v *= self.momentum
                v += g
                g = v
            p.data -= self.lr * g


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        self.reset()

    def reset(self):
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        grads = self._grads()
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind, params, lr, momentum=0.9, eps=1e-8):
    if kind == "sgd":
        return SGD(params, lr)
    if kind == "sgd_momentum":
        return SGD(params, lr, momentum=momentum)
    if kind == "adam":
        return Adam(params, lr, eps=eps)
    raise DomainError(f"unknown optimizer {kind!r}")
