"""Experiment architectures and the supervised training loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .activations import PreactBlock, activation_layers
from .exceptions import NumericError, StructuralError
from .layers import Dense, FeatureNormalize, Module
from .rng import derive_seed, permutation

ACTIVATIONS = ("hermite", "relu", "elu", "selu", "sigmoid", "softsign_only", "identity")
METRIC_COLUMNS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds")


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    activation: str = "hermite"
    degree: int = 4
    normalize: bool = True
    residual: bool = False
    second_softsign: bool = True
    coefficients: tuple | None = None
    trainable_coefficients: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise StructuralError(f"need at least two positive widths, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")
        hidden = self.widths[1:-1]
        if self.residual and len(set(hidden)) > 1:
            raise StructuralError("residual MLP needs equal hidden widths")

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return MlpSpec(**values)


@dataclass(frozen=True)
class AutoencoderSpec:
    encoder: tuple = (784, 1000, 500, 250, 30)
    activation: str = "hermite"
    degree: int = 4
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(int(w) for w in self.encoder))
        if len(self.encoder) < 2 or min(self.encoder) < 1:
            raise StructuralError(f"invalid encoder widths {self.encoder}")
        if self.encoder[-1] >= self.encoder[0]:
            raise StructuralError("code width must be smaller than the input width")
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")

    @property
    def widths(self):
        return self.encoder + self.encoder[-2::-1]


class Mlp(Module):
    """Feed-forward classifier producing logits.

    Plain hidden layers are ``dense -> [normalize] -> activation``.  With
    ``residual`` every hidden layer after the first is a :class:`PreactBlock`
    with a skip connection.
    """

    def __init__(self, spec: MlpSpec, seed=0):
        self.spec = spec
        w = spec.widths
        act = dict(degree=spec.degree, coefficients=spec.coefficients, trainable=spec.trainable_coefficients)
        layers, marks = [], []
        if spec.residual and len(w) > 2:
            layers.append(Dense(w[0], w[1]))
            marks.append(len(layers) - 1)
            for _ in range(len(w) - 3):
                layers.append(PreactBlock(w[1], activation=spec.activation, normalize=spec.normalize,
                                          second_softsign=spec.second_softsign, residual=True, **act))
                marks.append(len(layers) - 1)
            if spec.normalize:
                layers.append(FeatureNormalize(w[-2]))
            layers.extend(activation_layers(spec.activation, **act))
            marks[-1] = len(layers) - 1
        else:
            for n_in, n_out in zip(w[:-2], w[1:-1]):
                layers.append(Dense(n_in, n_out))
                if spec.normalize:
                    layers.append(FeatureNormalize(n_out))
                layers.extend(activation_layers(spec.activation, **act))
                marks.append(len(layers) - 1)
        layers.append(Dense(w[-2], w[-1]))
        self.layers = layers
        self._hidden_marks = tuple(marks)
        self.reinitialize(seed)

    def forward(self, x):
        h = ad.as_tensor(x)
        for layer in self.layers:
            h = layer(h)
        return h

    def hidden_outputs(self, x):
        """Post-activation values of every hidden layer, as arrays."""
        h = ad.as_tensor(x)
        outs = []
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i in self._hidden_marks:
                outs.append(h.data)
        return outs

    @property
    def output_layer(self):
        return self.layers[-1]


class Autoencoder(Module):
    """Symmetric autoencoder with a linear code layer and linear output."""

    def __init__(self, spec: AutoencoderSpec, seed=0):
        self.spec = spec
        w = spec.widths
        code_index = len(spec.encoder) - 2
        layers = []
        for i, (n_in, n_out) in enumerate(zip(w[:-1], w[1:])):
            layers.append(Dense(n_in, n_out))
            if i == code_index or i == len(w) - 2:
                continue
            if spec.normalize:
                layers.append(FeatureNormalize(n_out))
            layers.extend(activation_layers(spec.activation, spec.degree))
        self.layers = layers
        self.reinitialize(seed)

    def forward(self, x):
        h = ad.as_tensor(x)
        for layer in self.layers:
            h = layer(h)
        return h

    def encode(self, x):
        h = ad.as_tensor(x)
        dense_seen = 0
        for layer in self.layers:
            h = layer(h)
            if isinstance(layer, Dense):
                dense_seen += 1
                if dense_seen == len(self.spec.encoder) - 1:
                    return h
        return h


def build(spec, seed=0):
    """Instantiate the model described by ``spec``."""
    if isinstance(spec, MlpSpec):
        return Mlp(spec, seed)
    if isinstance(spec, AutoencoderSpec):
        return Autoencoder(spec, seed)
    raise StructuralError(f"cannot build from {type(spec).__name__}")


def parameter_count(spec) -> int:
    """Closed-form number of trainable scalars for ``spec``."""
    extra = {"hermite": spec.degree + 1}.get(spec.activation, 0)
    if isinstance(spec, AutoencoderSpec):
        w = spec.widths
        count = sum(a * b + b for a, b in zip(w[:-1], w[1:]))
        n_act = len(w) - 3
        hidden = [b for i, b in enumerate(w[1:-1]) if i != len(spec.encoder) - 2]
        return count + n_act * extra + (2 * sum(hidden) if spec.normalize else 0)
    if not spec.trainable_coefficients:
        extra = 0
    w = spec.widths
    hidden = w[1:-1]
    if spec.residual and len(w) > 2:
        h = w[1]
        n_blocks = len(w) - 3
        count = w[0] * h + h + n_blocks * (h * h + h) + h * w[-1] + w[-1]
        norms = n_blocks + 1 if spec.normalize else 0
        return count + norms * 2 * h + (n_blocks + 1) * extra
    count = sum(a * b + b for a, b in zip(w[:-1], w[1:]))
    return count + len(hidden) * extra + (2 * sum(hidden) if spec.normalize else 0)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    seconds: float

    def row(self):
        return [getattr(self, c) for c in METRIC_COLUMNS]


class TrainingAborted(NumericError):
    """Raised when a loss or gradient turns non-finite mid-run."""

    def __init__(self, epoch, log, cause):
        super().__init__(f"training aborted at epoch {epoch}: {cause}", op=getattr(cause, "op", None))
        self.epoch = epoch
        self.log = log


@dataclass
class Split:
    """Plain container for one supervised partition."""

    X: np.ndarray
    y: np.ndarray | None = None
    n_classes: int = 0
    extra: dict = field(default_factory=dict)


def classification_loss(model, X, y, n_classes):
    logits = model(X)
    return ad.softmax_cross_entropy(logits, ad.one_hot(y, n_classes)), logits


def evaluate(model, X, y=None, n_classes=0, batch_size=1024, task="classify"):
    """Loss and accuracy in eval mode (reconstruction: accuracy is NaN)."""
    was_training = model.training
    model.eval()
    total, correct = 0.0, 0
    try:
        for start in range(0, len(X), batch_size):
            xb = X[start:start + batch_size]
            if task == "reconstruct":
                total += ad.mse_sum(model(xb), xb).item() * len(xb)
            else:
                yb = y[start:start + batch_size]
                loss, logits = classification_loss(model, xb, yb, n_classes)
                total += loss.item() * len(xb)
                correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))
    finally:
        model.train(was_training)
    acc = float("nan") if task == "reconstruct" else correct / len(X)
    return total / len(X), acc


def train_supervised(model, train, test, optimizer, epochs, seed=0, batch_size=128,
                     task="classify", clock=time.perf_counter, callback=None):
    """Minibatch training; returns one :class:`EpochRecord` per epoch.

    ``train`` and ``test`` are :class:`Split` objects (``y`` unused for
    ``task="reconstruct"``).  Training loss/accuracy are averaged over the
    minibatches of the epoch; test metrics are computed in eval mode after
    the epoch.  Shuffling uses a stream keyed by ``(seed, epoch)``.
    """
    n = len(train.X)
    log = []
    model.train()
    for epoch in range(epochs):
        start_time = clock()
        order = permutation(derive_seed(seed, "shuffle", epoch), n)
        loss_sum, correct = 0.0, 0
        try:
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                xb = train.X[idx]
                optimizer.zero_grad()
                if task == "reconstruct":
                    loss = ad.mse_sum(model(xb), xb)
                else:
                    yb = train.y[idx]
                    loss, logits = classification_loss(model, xb, yb, train.n_classes)
                    correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))
                loss.backward()
                optimizer.step()
                loss_sum += loss.item() * len(idx)
                if callback is not None:
                    callback(model, epoch)
            test_loss, test_acc = (float("nan"), float("nan"))
            if test is not None and len(test.X):
                test_loss, test_acc = evaluate(model, test.X, test.y, train.n_classes, task=task)
        except NumericError as exc:
            raise TrainingAborted(epoch, log, exc) from exc
        train_acc = float("nan") if task == "reconstruct" else correct / n
        log.append(EpochRecord(epoch, loss_sum / n, train_acc, test_loss, test_acc, clock() - start_time))
    return log


def epochs_to_reach(values, threshold, mode="below"):
    """First index whose value is <= (``below``) or >= (``above``) threshold."""
    for i, v in enumerate(values):
        if (v <= threshold) if mode == "below" else (v >= threshold):
            return i
    return None
