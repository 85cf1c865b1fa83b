"""Landscape probes, active-unit census and the one-hidden-layer robustness bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .exceptions import DomainError, NumericError, StructuralError
from .hermite import basis_matrix
from .models import classification_loss
from .rng import derive_seed, generator

DEFAULT_ETAS = tuple(round(0.05 * k, 2) for k in range(1, 21))


# ---------------------------------------------------------------------------
# landscape


@dataclass(frozen=True)
class LandscapeProbe:
    etas: tuple
    losses: tuple

    def __post_init__(self):
        if len(self.etas) != len(self.losses):
            raise StructuralError("one loss per step size")
        if list(self.etas) != sorted(self.etas):
            raise StructuralError("step sizes must be ascending")


def _flat(arrays):
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def loss_along_gradient(model, X, y, n_classes, etas=DEFAULT_ETAS, loss_fn=None):
    """``L(w - eta * grad L(w))`` for each ``eta``; the model is left untouched.

    ``loss_fn(model) -> Tensor`` overrides the default cross-entropy on
    ``(X, y)``.  A blowup at some ``eta`` is recorded as ``+inf``.
    """
    etas = tuple(float(e) for e in etas)
    if not etas:
        raise DomainError("need at least one step size")
    if loss_fn is None:
        def loss_fn(m):
            return classification_loss(m, X, y, n_classes)[0]
    saved = model.state_dict()
    params = model.parameters()
    grads_before = [p.grad for p in params]
    try:
        model.zero_grad()
        loss = loss_fn(model)
        loss.backward()
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
        start = [p.data.copy() for p in params]
        values = []
        for eta in etas:
            model.load_state_dict(saved)
            if eta == 0.0:
                values.append(loss.item())
                continue
            for p, w, g in zip(params, start, grads):
                p.data = w - eta * g
            try:
                value = loss_fn(model).item()
            except NumericError:
                value = math.inf
            values.append(value if math.isfinite(value) else math.inf)
    finally:
        model.load_state_dict(saved)
        for p, g in zip(params, grads_before):
            p.grad = g
    return LandscapeProbe(etas, tuple(values))


@dataclass
class Trajectory:
    weights: list
    gradients: list


def record_trajectory(model, X, y, n_classes, optimizer, steps, batch_size=64, seed=0):
    """Take ``steps`` SGD steps, snapshotting flattened weights and gradients.

    Snapshot ``t`` holds the weights before step ``t`` and the gradient
    computed there.
    """
    from .rng import permutation

    weights, gradients = [], []
    n = len(X)
    order = np.zeros(0, dtype=np.int64)
    epoch = 0
    model.train()
    for step in range(steps):
        if order.size < batch_size:
            order = np.concatenate([order, permutation(derive_seed(seed, "trajectory", epoch), n)])
            epoch += 1
        idx, order = order[:batch_size], order[batch_size:]
        optimizer.zero_grad()
        loss, _ = classification_loss(model, X[idx], y[idx], n_classes)
        loss.backward()
        params = model.parameters()
        weights.append(_flat([p.data for p in params]))
        gradients.append(_flat([np.zeros_like(p.data) if p.grad is None else p.grad for p in params]))
        optimizer.step()
    return Trajectory(weights, gradients)


def max_beta_smoothness(weights, gradients):
    """``max_t ||g_{t+1} - g_t|| / ||w_{t+1} - w_t||`` over consecutive snapshots."""
    if len(weights) < 2 or len(weights) != len(gradients):
        raise DomainError("need at least two matching weight/gradient snapshots")
    best = None
    for t in range(len(weights) - 1):
        dw = float(np.linalg.norm(np.asarray(weights[t + 1]) - np.asarray(weights[t])))
        if dw == 0.0:
            continue
        ratio = float(np.linalg.norm(np.asarray(gradients[t + 1]) - np.asarray(gradients[t]))) / dw
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise DomainError("every displacement in the trajectory is zero")
    return best


def weight_deviation(weights):
    """Euclidean distance of every snapshot from the first."""
    if len(weights) < 1:
        raise DomainError("need at least one snapshot")
    w0 = np.asarray(weights[0])
    return np.array([float(np.linalg.norm(np.asarray(w) - w0)) for w in weights])


# ---------------------------------------------------------------------------
# active units


def active_unit_census(model, X, tau=0.0, zero_tol=1e-12):
    """Per hidden layer, the fraction of units nonzero on more than ``tau`` of ``X``."""
    if not 0.0 <= tau < 1.0:
        raise DomainError(f"tau must lie in [0, 1), got {tau}")
    was_training = model.training
    model.eval()
    try:
        outputs = model.hidden_outputs(np.asarray(X, dtype=np.float64))
    finally:
        model.train(was_training)
    fractions = []
    for h in outputs:
        share = np.mean(np.abs(h) > zero_tol, axis=0)
        fractions.append(float(np.mean(share > tau)))
    return fractions


# ---------------------------------------------------------------------------
# perturbation bound for a one-hidden-layer Hermite network


def conjugate_exponent(p):
    if p == math.inf:
        return 1.0
    if p == 1:
        return math.inf
    if p < 1:
        raise DomainError(f"Hoelder exponent must be >= 1, got {p}")
    return p / (p - 1.0)


@dataclass(frozen=True)
class BoundInputs:
    """``f_k(x) = sum_j A[k, j] * sigma(W[j] . x)`` with ``sigma = sum_i c_i h_i``."""

    A: np.ndarray
    W: np.ndarray
    c: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        c = np.asarray(self.c, dtype=np.float64)
        if A.shape[1] != W.shape[0]:
            raise StructuralError(f"A has {A.shape[1]} columns but W has {W.shape[0]} rows")
        if c.ndim != 1 or c.size < 2:
            raise StructuralError("need a coefficient vector of degree >= 1")
        conjugate_exponent(self.p)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "c", c)

    @property
    def degree(self):
        return self.c.size - 1

    @property
    def q(self):
        return conjugate_exponent(self.p)

    def outputs(self, x):
        z = self.W @ np.asarray(x, dtype=np.float64)
        return self.A @ (basis_matrix(z, self.degree) @ self.c)


def hermite_abs_coefficient_sums(degree):
    """``S_n``: sum of |coefficients| of He_n, so |He_n(z)| <= S_n max(1, |z|)^n."""
    s = [1, 1]
    for n in range(1, degree):
        s.append(s[n] + n * s[n - 1])
    return np.array(s[: degree + 1], dtype=np.float64)


def lemma1_constant(c, scale=1.0):
    """``scale * (d + 1) * max|c_i| * max_n S_n / sqrt(n!)``."""
    c = np.asarray(c, dtype=np.float64)
    d = c.size - 1
    nu = hermite_abs_coefficient_sums(d) / np.sqrt([math.factorial(n) for n in range(d + 1)])
    return scale * (d + 1) * float(np.max(np.abs(c))) * float(np.max(nu))


class Lemma1Result(NamedTuple):
    bound: float
    lhs_max: float
    alpha: float
    beta: float
    C: float
    J: int


def lemma1_bound(inputs: BoundInputs, x, C=None):
    """Bound ``C d alpha beta`` next to the exact ``max_{l,k} |f_l(x) - f_k(x)|``.

    ``beta`` uses the row ``w_J`` of largest p-norm.  ``C`` defaults to
    :func:`lemma1_constant`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (inputs.W.shape[1],):
        raise StructuralError(f"input has shape {x.shape}, W expects ({inputs.W.shape[1]},)")
    A, W = inputs.A, inputs.W
    d = inputs.degree
    diffs = np.abs(A[:, None, :] - A[None, :, :]).sum(axis=2)
    alpha = float(diffs.max())
    row_norms = np.linalg.norm(W, ord=inputs.p, axis=1)
    J = int(np.argmax(row_norms))
    s = float(row_norms[J] * np.linalg.norm(x, ord=inputs.q))
    beta = max(s ** d, s)
    C = lemma1_constant(inputs.c) if C is None else float(C)
    f = inputs.outputs(x)
    lhs = float(f.max() - f.min())
    return Lemma1Result(C * d * alpha * beta, lhs, alpha, beta, C, J)


def random_bound_instance(rng, degree, p, n_classes=3, n_hidden=4, n_features=2, x_scale=1.0):
    """Gaussian tiny network and input used by the bound checks."""
    A = rng.standard_normal((n_classes, n_hidden))
    W = rng.standard_normal((n_hidden, n_features))
    c = rng.standard_normal(degree + 1)
    x = x_scale * rng.standard_normal(n_features)
    return BoundInputs(A, W, c, p), x


def lemma1_violations(degree, p, n, seed, scale=1.0, **shape):
    """Count instances whose exact gap exceeds the bound with ``C`` scaled by ``scale``."""
    rng = generator(seed, "lemma1", degree, str(p))
    count = 0
    for _ in range(n):
        inputs, x = random_bound_instance(rng, degree, p, **shape)
        r = lemma1_bound(inputs, x, lemma1_constant(inputs.c, scale))
        if r.lhs_max > r.bound:
            count += 1
    return count


def calibrate_lemma1_scale(configs, n, seed, max_doublings=30):
    """Smallest power-of-two multiplier of the default ``C`` with no violations.

    ``configs`` is an iterable of ``(degree, p)`` pairs; the corpus for each
    is drawn from ``seed``.  Raises :class:`DomainError` when no multiplier
    up to ``2**max_doublings`` suffices.
    """
    configs = list(configs)
    for k in range(max_doublings + 1):
        scale = 2.0 ** k
        if all(lemma1_violations(d, p, n, seed, scale) == 0 for d, p in configs):
            return scale
    raise DomainError("no power-of-two multiplier removes every violation")


# ---------------------------------------------------------------------------
# far-from-data confidence


class RequiredNorm(NamedTuple):
    value: float
    vacuous: bool


def theorem1_required_norm(w_J_norm, alpha, n_classes, eps):
    """``(1 / ||w_J||) * log(alpha / log(1 + K eps))``, or ``(0, True)`` if vacuous."""
    if not (w_J_norm > 0 and alpha > 0 and eps > 0 and n_classes >= 1):
        raise DomainError("need positive ||w_J||, alpha, eps and class count")
    denom = math.log1p(n_classes * eps)
    if alpha <= denom:
        return RequiredNorm(0.0, True)
    return RequiredNorm(math.log(alpha / denom) / w_J_norm, False)


def confidence_profile(model, direction, radii):
    """``max_k softmax(f(r * direction))_k`` for each radius (eval mode)."""
    radii = np.asarray(radii, dtype=np.float64)
    if np.any(np.diff(radii) < 0):
        raise DomainError("radii must be ascending")
    direction = np.asarray(direction, dtype=np.float64)
    was_training = model.training
    model.eval()
    try:
        logits = model(radii[:, None] * direction[None, :]).data
    finally:
        model.train(was_training)
    return np.max(ad.softmax(logits), axis=1)


def random_directions(n, dim, seed):
    g = generator(seed, "directions")
    v = g.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def confidence_sweep(model, n_directions, radii, seed=0):
    """Confidence profiles over random unit directions, shape ``[n_dir, n_radii]``."""
    dim = model.layers[0].n_in
    dirs = random_directions(n_directions, dim, seed)
    return np.array([confidence_profile(model, u, radii) for u in dirs])


# ---------------------------------------------------------------------------
# report


def format_block(probe, params, columns, rows):
    """One CSV block headed by ``# probe=<name> key=value ...``."""
    head = " ".join([f"probe={probe}"] + [f"{k}={v}" for k, v in params.items()])
    lines = [f"# {head}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
