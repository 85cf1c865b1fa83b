"""Speed-as-a-Supervisor pseudo-labeling.

The outer loop owns a pseudo-label posterior ``P_u`` (one probability row per
unlabeled example).  Each outer epoch reinitializes the network, trains it
for a few inner epochs against the frozen posterior, and accumulates the
gradient of the loss with respect to ``P_u`` along the way:

    delta_P += lr_primal * dL/dP_u            (every inner step)
    P_u      = project_simplex(P_u - lr_dual * delta_P)   (end of outer epoch)

Labels whose loss falls fastest collect the most negative gradient and gain
mass.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import InvariantError, NumericError, StructuralError
from .optim import SGD
from .rng import derive_seed, permutation, randint

SAAS_COLUMNS = ("outer_epoch", "pl_accuracy", "mean_inner_loss_first", "mean_inner_loss_last", "seconds")


def project_simplex(V):
    """Euclidean projection of each row of ``V`` onto the probability simplex."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    n, k = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = U - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1.0)
    return np.maximum(V - theta[:, None], 0.0)


def check_simplex(P, tol=1e-6):
    P = np.asarray(P)
    if P.ndim != 2:
        raise InvariantError(f"posterior must be a matrix, got shape {P.shape}")
    if P.min(initial=0.0) < -tol or np.max(np.abs(P.sum(axis=1) - 1.0), initial=0.0) > tol:
        raise InvariantError("pseudo-label rows are not on the probability simplex")


@dataclass(frozen=True)
class SaasConfig:
    inner_epochs: int = 5
    outer_epochs: int = 30
    lr_weights: float = 0.1
    lr_primal: float = 1.0
    lr_dual: float = 1.0
    entropy_weight: float = 0.1
    batch_size: int = 64
    seed: int = 0
    hard_targets: bool = False
    entropy_floor: float = 1e-3

    def __post_init__(self):
        for name in ("lr_weights", "lr_primal", "lr_dual"):
            if not getattr(self, name) > 0:
                raise StructuralError(f"{name} must be positive")
        if self.inner_epochs < 1 or self.outer_epochs < 0 or self.batch_size < 1:
            raise StructuralError("epoch counts and batch size must be positive")
        if self.entropy_weight < 0:
            raise StructuralError("entropy_weight must be non-negative")


@dataclass
class OuterRecord:
    outer_epoch: int
    pl_accuracy: float
    mean_inner_loss_first: float
    mean_inner_loss_last: float
    seconds: float

    def row(self):
        return [getattr(self, c) for c in SAAS_COLUMNS]


@dataclass
class SaasState:
    posterior: np.ndarray
    delta: np.ndarray
    outer_epoch: int = 0
    log: list = field(default_factory=list)


@dataclass
class SaasResult:
    model: object
    posterior: np.ndarray
    log: list
    loss_trace: list
    aborted_at: int | None = None

    @property
    def accuracies(self):
        return [r.pl_accuracy for r in self.log]


def initialize_pseudo_labels(n_unlabeled, n_classes, seed=0):
    """Each row is a one-hot vector at a uniformly random class."""
    if n_unlabeled < 1 or n_classes < 1:
        raise StructuralError("need positive unlabeled count and class count")
    labels = randint(derive_seed(seed, "pseudo-init"), n_classes, n_unlabeled)
    return ad.one_hot(labels, n_classes)


def saas_loss(model, x_labeled, y_labeled, z_unlabeled, targets, entropy_weight, n_classes,
              entropy_floor=1e-12):
    """Labeled CE + soft CE on unlabeled rows + weighted mean entropy of the rows.

    ``targets`` may be a tensor requiring grad; its gradient is then
    ``dL/dP_u`` for the rows in the batch.  Pass ``z_unlabeled=None`` for a
    purely supervised batch.
    """
    if z_unlabeled is None or len(z_unlabeled) == 0:
        logits = model(x_labeled)
        return ad.softmax_cross_entropy(logits, ad.one_hot(y_labeled, n_classes))
    targets = ad.as_tensor(targets)
    check_simplex(targets.data)
    n_l = len(x_labeled)
    logits = model(np.concatenate([x_labeled, z_unlabeled], axis=0))
    loss = ad.softmax_cross_entropy(logits[:n_l], ad.one_hot(y_labeled, n_classes))
    loss = loss + ad.softmax_cross_entropy(logits[n_l:], targets)
    if entropy_weight:
        loss = loss + ad.mul(ad.mean_entropy(targets, entropy_floor), entropy_weight)
    return loss


def pseudo_label_accuracy(posterior, true_labels):
    """Fraction of rows whose argmax (lowest index on ties) equals the truth."""
    posterior = np.asarray(posterior)
    true_labels = np.asarray(true_labels)
    if posterior.shape[0] != true_labels.shape[0]:
        raise StructuralError("posterior rows and labels disagree in length")
    return float(np.mean(np.argmax(posterior, axis=1) == true_labels))


def epochs_to_accuracy(log, threshold):
    """First outer epoch (0-indexed) with accuracy >= threshold, else None."""
    values = [r.pl_accuracy if isinstance(r, OuterRecord) else r for r in log]
    if not values:
        raise StructuralError("accuracy log is empty")
    for i, v in enumerate(values):
        if v >= threshold:
            return i
    return None


def max_accuracy(log):
    return max(r.pl_accuracy if isinstance(r, OuterRecord) else r for r in log)


def max_accuracy_gap(log_a, log_b):
    """Largest per-epoch advantage of run ``a`` over run ``b``."""
    a = [r.pl_accuracy if isinstance(r, OuterRecord) else r for r in log_a]
    b = [r.pl_accuracy if isinstance(r, OuterRecord) else r for r in log_b]
    return max(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class CostEstimate:
    hours: float
    dollars: float


def cost_model(epochs, seconds_per_epoch, dollars_per_hour):
    """Wall hours and on-demand cost of ``epochs`` epochs."""
    if epochs < 0 or seconds_per_epoch < 0 or dollars_per_hour < 0:
        raise StructuralError("cost model inputs must be non-negative")
    hours = epochs * seconds_per_epoch / 3600.0
    return CostEstimate(hours, hours * dollars_per_hour)


def saas_train(model, x_labeled, y_labeled, x_unlabeled, config: SaasConfig, n_classes=None,
               y_unlabeled=None, posterior=None, clock=time.perf_counter, on_dual_step=None):
    """Run the two-loop procedure; returns a :class:`SaasResult`.

    ``y_unlabeled`` (true labels) is used only to log pseudo-label accuracy.
    ``on_dual_step(state)`` is called after each posterior update.
    """
    x_labeled = np.asarray(x_labeled, dtype=np.float64)
    x_unlabeled = np.asarray(x_unlabeled, dtype=np.float64)
    y_labeled = np.asarray(y_labeled, dtype=np.int64)
    k = int(n_classes if n_classes is not None else y_labeled.max() + 1)
    n_l, n_u = len(x_labeled), len(x_unlabeled)
    if posterior is None:
        posterior = initialize_pseudo_labels(n_u, k, config.seed)
    posterior = np.array(posterior, dtype=np.float64)
    if posterior.shape != (n_u, k):
        raise StructuralError(f"posterior shape {posterior.shape} != ({n_u}, {k})")
    state = SaasState(posterior, np.zeros_like(posterior))
    params = model.parameters()
    optimizer = SGD(params, config.lr_weights)
    trace = []
    bs = config.batch_size
    bl = min(bs, n_l)
    aborted = None

    for outer in range(config.outer_epochs):
        started = clock()
        state.outer_epoch = outer
        model.reinitialize(derive_seed(config.seed, "outer", outer))
        model.train()
        optimizer.reset()
        state.delta[:] = 0.0
        targets_all = state.posterior
        if config.hard_targets:
            targets_all = ad.one_hot(np.argmax(state.posterior, axis=1), k)
        epoch_means = []
        try:
            for inner in range(config.inner_epochs):
                order_u = permutation(derive_seed(config.seed, "u", outer, inner), n_u)
                order_l = permutation(derive_seed(config.seed, "l", outer, inner), n_l)
                total, count = 0.0, 0
                for step, start in enumerate(range(0, n_u, bs)):
                    rows = order_u[start:start + bs]
                    lab = np.take(order_l, np.arange(step * bl, step * bl + bl), mode="wrap")
                    target = ad.Tensor(targets_all[rows], requires_grad=True)
                    optimizer.zero_grad()
                    loss = saas_loss(model, x_labeled[lab], y_labeled[lab], x_unlabeled[rows], target,
                                     config.entropy_weight, k, config.entropy_floor)
                    loss.backward()
                    optimizer.step()
                    np.add.at(state.delta, rows, config.lr_primal * target.grad)
                    value = loss.item()
                    trace.append(value)
                    total += value * len(rows)
                    count += len(rows)
                epoch_means.append(total / count)
        except NumericError:
            aborted = outer
            break
        state.posterior = project_simplex(state.posterior - config.lr_dual * state.delta)
        if on_dual_step is not None:
            on_dual_step(state)
        acc = float("nan") if y_unlabeled is None else pseudo_label_accuracy(state.posterior, y_unlabeled)
        state.log.append(OuterRecord(outer, acc, epoch_means[0], epoch_means[-1], clock() - started))

    return SaasResult(model, state.posterior, state.log, trace, aborted)


def knn_oracle_accuracy(x_labeled, y_labeled, x_unlabeled, y_unlabeled, k=1):
    """Accuracy of k-nearest-neighbour voting from the labeled set alone."""
    d2 = ((x_unlabeled[:, None, :] - x_labeled[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = y_labeled[nearest]
    pred = np.array([np.bincount(v).argmax() for v in votes])
    return float(np.mean(pred == y_unlabeled))

