"""scikit-learn compatible wrappers around the models and SaaS."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autodiff as ad
from .exceptions import StructuralError
from .models import AutoencoderSpec, MlpSpec, Split, build, train_supervised
from .optim import make_optimizer
from .saas import SaasConfig, saas_train


def _predict_logits(model, X, batch_size=1024):
    was_training = model.training
    model.eval()
    try:
        return np.vstack([model(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)])
    finally:
        model.train(was_training)


class HermiteMLPClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier with Hermite (or baseline) activations.

    ``hidden`` lists hidden widths; input and output widths come from the
    data.  Labels may be any hashable values; they are encoded internally.
    """

    def __init__(self, hidden=(64, 64), activation="hermite", degree=4, normalize=True,
                 residual=False, optimizer="sgd", learning_rate=0.1, epochs=20, batch_size=128,
                 random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.degree = degree
        self.normalize = normalize
        self.residual = residual
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _spec(self, n_features, n_classes):
        return MlpSpec((n_features, *self.hidden, n_classes), self.activation, self.degree,
                       self.normalize, self.residual)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        seed = int(self.random_state or 0)
        self.model_ = build(self._spec(X.shape[1], self.classes_.size), seed)
        opt = make_optimizer(self.optimizer, self.model_.parameters(), self.learning_rate)
        self.history_ = train_supervised(self.model_, Split(X, codes, self.classes_.size), None, opt,
                                         self.epochs, seed=seed, batch_size=self.batch_size)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return ad.softmax(_predict_logits(self.model_, X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class MLPAutoencoder(TransformerMixin, BaseEstimator):
    """Symmetric autoencoder; ``transform`` returns the code layer."""

    def __init__(self, encoder=(64, 16), activation="hermite", degree=4, normalize=False,
                 optimizer="adam", learning_rate=1e-3, epochs=20, batch_size=128, random_state=0):
        self.encoder = encoder
        self.activation = activation
        self.degree = degree
        self.normalize = normalize
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        spec = AutoencoderSpec((X.shape[1], *self.encoder), self.activation, self.degree, self.normalize)
        seed = int(self.random_state or 0)
        self.model_ = build(spec, seed)
        opt = make_optimizer(self.optimizer, self.model_.parameters(), self.learning_rate)
        self.history_ = train_supervised(self.model_, Split(X), None, opt, self.epochs, seed=seed,
                                         batch_size=self.batch_size, task="reconstruct")
        return self

    def _checked(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def transform(self, X):
        X = self._checked(X)
        was_training = self.model_.training
        self.model_.eval()
        try:
            return self.model_.encode(X).data
        finally:
            self.model_.train(was_training)

    def reconstruct(self, X):
        return _predict_logits(self.model_, self._checked(X))


class SaasClassifier(ClassifierMixin, BaseEstimator):
    """Transductive SaaS pseudo-labeling.

    Rows with ``y == -1`` are unlabeled.  After ``fit``, ``transduction_``
    holds a label for every training row and ``label_distributions_`` the
    pseudo-label posterior (one-hot for labeled rows).  ``predict`` uses the
    network from the last outer epoch.
    """

    def __init__(self, hidden=(32, 32), activation="hermite", degree=4, normalize=True,
                 inner_epochs=5, outer_epochs=30, lr_weights=0.1, lr_primal=1.0, lr_dual=1.0,
                 entropy_weight=0.1, entropy_floor=1e-3, batch_size=64, random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.degree = degree
        self.normalize = normalize
        self.inner_epochs = inner_epochs
        self.outer_epochs = outer_epochs
        self.lr_weights = lr_weights
        self.lr_primal = lr_primal
        self.lr_dual = lr_dual
        self.entropy_weight = entropy_weight
        self.entropy_floor = entropy_floor
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        labeled = y != -1
        if labeled.all() or not labeled.any():
            raise StructuralError("need both labeled rows and unlabeled rows (y == -1)")
        self.classes_, codes = np.unique(y[labeled], return_inverse=True)
        k = self.classes_.size
        self.n_features_in_ = X.shape[1]
        seed = int(self.random_state or 0)
        spec = MlpSpec((X.shape[1], *self.hidden, k), self.activation, self.degree, self.normalize)
        config = SaasConfig(self.inner_epochs, self.outer_epochs, self.lr_weights, self.lr_primal,
                            self.lr_dual, self.entropy_weight, self.batch_size, seed,
                            entropy_floor=self.entropy_floor)
        result = saas_train(build(spec, seed), X[labeled], codes, X[~labeled], config, k)
        self.model_ = result.model
        self.saas_log_ = result.log
        dist = np.zeros((len(X), k))
        dist[labeled] = ad.one_hot(codes, k)
        dist[~labeled] = result.posterior
        self.label_distributions_ = dist
        self.transduction_ = self.classes_[np.argmax(dist, axis=1)]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return ad.softmax(_predict_logits(self.model_, X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
