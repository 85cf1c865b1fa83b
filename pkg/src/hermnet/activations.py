"""Hermite activation, softsign, baseline activations and the pre-activation block."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .exceptions import DomainError, StructuralError
from .hermite import relu_expansion_coefficients
from .layers import Dense, FeatureNormalize, Module

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946


@lru_cache(maxsize=64)
def _relu_init(degree):
    return tuple(relu_expansion_coefficients(degree))


def relu_init_coefficients(degree):
    """Coefficients of ReLU in h_0..h_degree; cached per degree."""
    return np.array(_relu_init(degree))


def alternating_coefficients(degree):
    """``c_i = (-1)^i``, the choice analysed for far-from-data inputs."""
    return (-1.0) ** np.arange(degree + 1)


def softsign(x):
    """``x / (1 + |x|)``; accepts arrays or tensors."""
    if isinstance(x, ad.Tensor):
        return ad.softsign(x)
    x = np.asarray(x, dtype=np.float64)
    return x / (1.0 + np.abs(x))


def _relu(x):
    return np.maximum(x, 0.0)


def _drelu(x, y):
    return (x > 0).astype(np.float64)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _delu(x, y):
    return np.where(x > 0, 1.0, y + 1.0)


def _selu(x):
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def _dselu(x, y):
    return np.where(x > 0, SELU_SCALE, y + SELU_SCALE * SELU_ALPHA)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _dsigmoid(x, y):
    return y * (1.0 - y)


def _identity(x):
    return np.array(x, dtype=np.float64, copy=True)


def _didentity(x, y):
    return np.ones_like(x)


BASELINES = {
    "relu": (_relu, _drelu),
    "elu": (_elu, _delu),
    "selu": (_selu, _dselu),
    "sigmoid": (_sigmoid, _dsigmoid),
    "identity": (_identity, _didentity),
}


def relu(x):
    return _relu(np.asarray(x, dtype=np.float64))


def elu(x):
    return _elu(np.asarray(x, dtype=np.float64))


def selu(x):
    return _selu(np.asarray(x, dtype=np.float64))


def sigmoid(x):
    return _sigmoid(np.asarray(x, dtype=np.float64))


class Activation(Module):
    """One of the fixed baseline nonlinearities."""

    def __init__(self, name):
        if name not in BASELINES:
            raise DomainError(f"unknown activation {name!r}; choose from {sorted(BASELINES)}")
        self.name = name

    def forward(self, x):
        f, df = BASELINES[self.name]
        return ad.pointwise_unary(x, f, df, self.name)


class Softsign(Module):
    def forward(self, x):
        return ad.softsign(x)


class HermiteActivation(Module):
    """``sigma(x) = sum_i c_i h_i(x)`` with one coefficient vector per layer.

    By default the coefficients start at the ReLU expansion and are trained.
    Passing ``coefficients`` fixes the initial (and reinitialized) values;
    ``trainable=False`` freezes them.
    """

    def __init__(self, degree=4, coefficients=None, trainable=True):
        if degree < 0:
            raise DomainError("degree must be >= 0")
        self.degree = degree
        if coefficients is None:
            init = relu_init_coefficients(degree)
        else:
            init = np.asarray(coefficients, dtype=np.float64)
            if init.shape != (degree + 1,):
                raise StructuralError(f"expected {degree + 1} coefficients, got {init.shape}")
        self._init = init.copy()
        self.coefficients = ad.Tensor(init.copy(), requires_grad=trainable, name="coefficients")

    def reset_parameters(self, rng):
        self.coefficients.data = self._init.copy()

    def forward(self, x):
        return ad.hermite(x, self.coefficients)


def activation_layers(name, degree=4, coefficients=None, trainable=True):
    """Layers realizing an activation choice in an MLP.

    ``hermite`` is always followed by a softsign; ``softsign_only`` is the
    degree-zero ablation with the polynomial removed.
    """
    if name == "hermite":
        return [HermiteActivation(degree, coefficients, trainable), Softsign()]
    if name == "softsign_only":
        return [Softsign()]
    return [Activation(name)]


class PreactBlock(Module):
    """normalize -> activation (-> softsign) -> dense (-> softsign), plus skip.

    With ``residual=True`` the input is added to the branch output, which
    requires equal input and output widths.
    """

    def __init__(self, width, out_width=None, activation="hermite", degree=4, normalize=True,
                 second_softsign=True, residual=True, coefficients=None, trainable=True):
        out_width = width if out_width is None else out_width
        if residual and out_width != width:
            raise StructuralError("residual block needs equal input and output widths")
        self.residual = residual
        self.norm = FeatureNormalize(width) if normalize else None
        self.act = activation_layers(activation, degree, coefficients, trainable)
        self.dense = Dense(width, out_width)
        self.post = Softsign() if second_softsign else None

    def forward(self, x):
        h = x
        if self.norm is not None:
            h = self.norm(h)
        for layer in self.act:
            h = layer(h)
        h = self.dense(h)
        if self.post is not None:
            h = self.post(h)
        return ad.add(x, h) if self.residual else h
