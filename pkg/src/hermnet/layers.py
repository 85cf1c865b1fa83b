"""Module container and the dense / normalization layers."""
from __future__ import annotations

import copy
import math

import numpy as np

from . import autodiff as ad
from .exceptions import StructuralError
from .rng import generator


class Module:
    """Base class: trainable tensors, numpy buffers and child modules.

    Parameters are discovered from instance attributes in definition order:
    a :class:`~hermnet.autodiff.Tensor` with ``requires_grad`` is a parameter,
    a ``Module`` (or list of modules) is a child, and names listed in
    ``_buffers`` are plain arrays saved with the state.
    """

    _buffers: tuple = ()
    training = True

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_modules(self, prefix=""):
        yield prefix, self
        for name, child in self.children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self):
        for prefix, module in self.named_modules():
            for name, value in vars(module).items():
                if isinstance(value, ad.Tensor) and value.requires_grad:
                    yield (f"{prefix}.{name}" if prefix else name), value

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        for prefix, module in self.named_modules():
            for name in module._buffers:
                yield (f"{prefix}.{name}" if prefix else name), getattr(module, name)

    def n_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def train(self, mode=True):
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def reset_parameters(self, rng):
        """Redraw this module's own parameters (children are handled separately)."""

    def reinitialize(self, seed):
        """Redraw every parameter from a stream keyed by ``seed`` and module path."""
        for prefix, module in self.named_modules():
            module.reset_parameters(generator(seed, "init", prefix))
        return self

    def state_dict(self):
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(b, copy=True) for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        expected = dict(self.named_parameters())
        buffers = {}
        for prefix, module in self.named_modules():
            for name in module._buffers:
                buffers[f"{prefix}.{name}" if prefix else name] = (module, name)
        missing = (set(expected) | set(buffers)) - set(state)
        if missing:
            raise StructuralError(f"state is missing array {sorted(missing)[0]!r}")
        unexpected = set(state) - set(expected) - set(buffers)
        if unexpected:
            raise StructuralError(f"state has unexpected array {sorted(unexpected)[0]!r}")
        for name, p in expected.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise StructuralError(f"array {name!r} has shape {value.shape}, model expects {p.data.shape}")
            p.data = value.copy()
        for name, (module, attr) in buffers.items():
            value = np.asarray(state[name], dtype=np.float64)
            current = getattr(module, attr)
            if value.shape != current.shape:
                raise StructuralError(f"array {name!r} has shape {value.shape}, model expects {current.shape}")
            setattr(module, attr, value.copy())
        return self

    def copy(self):
        return copy.deepcopy(self)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Dense(Module):
    """``x @ weight + bias`` with Kaiming-normal weights (std sqrt(2/fan_in))."""

    def __init__(self, n_in, n_out, rng=None):
        if n_in < 1 or n_out < 1:
            raise StructuralError(f"dense layer widths must be positive, got {n_in} -> {n_out}")
        self.n_in, self.n_out = n_in, n_out
        self.weight = ad.Tensor(np.zeros((n_in, n_out)), requires_grad=True, name="weight")
        self.bias = ad.Tensor(np.zeros(n_out), requires_grad=True, name="bias")
        self.reset_parameters(rng if rng is not None else generator(0))

    def reset_parameters(self, rng):
        self.weight.data = rng.standard_normal((self.n_in, self.n_out)) * math.sqrt(2.0 / self.n_in)
        self.bias.data = np.zeros(self.n_out)

    def forward(self, x):
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise StructuralError(f"dense layer expects (*, {self.n_in}) input, got {x.shape}")
        return ad.matmul(x, self.weight) + self.bias


class FeatureNormalize(Module):
    """Batch-statistics normalization with a trainable per-feature affine map."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, width, momentum=0.9, eps=1e-5):
        self.width = width
        self.momentum, self.eps = momentum, eps
        self.scale = ad.Tensor(np.ones(width), requires_grad=True, name="scale")
        self.shift = ad.Tensor(np.zeros(width), requires_grad=True, name="shift")
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)

    def reset_parameters(self, rng):
        self.scale.data = np.ones(self.width)
        self.shift.data = np.zeros(self.width)
        self.running_mean = np.zeros(self.width)
        self.running_var = np.ones(self.width)

    def forward(self, x):
        return ad.feature_normalize(x, self.scale, self.shift, self.running_mean, self.running_var,
                                    training=self.training, momentum=self.momentum, eps=self.eps)
