"""scikit-learn style wrappers around training and pruning."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .masks import PruneConfig, SparsitySchedule, prune
from .nn.network import Network, architecture, glorot_init, softmax
from .nn.train import TrainConfig, predict_logits, retrain, train


class NetworkClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward classifier trained with Adam on softmax cross-entropy.

    ``X`` may be 2-D (samples, features) or image-shaped (samples, C, H, W);
    the input shape is taken from the first fit.
    """

    def __init__(self, architecture="fcn-small", steps=2000, learning_rate=1.2e-3,
                 batch_size=60, batchnorm=False, random_state=0):
        self.architecture = architecture
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.batchnorm = batchnorm
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(steps=self.steps, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, seed=self.random_state,
                           retrain_steps=self.steps)

    def _dataset(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return Dataset(X, encoded, len(self.classes_))

    def fit(self, X, y):
        data = self._dataset(X, y)
        spec = architecture(self.architecture, input_shape=data.input_shape,
                            n_classes=len(self.classes_), batchnorm=self.batchnorm)
        self.network_ = train(glorot_init(spec, seed=self.random_state), data, self._train_config())
        return self

    def _check(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.shape[1:] != self.network_.input_shape:
            raise ValueError(f"X has sample shape {X.shape[1:]}, expected {self.network_.input_shape}")
        return X

    def decision_function(self, X):
        return predict_logits(self.network_, self._check(X))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class LookaheadPruner(TransformerMixin, BaseEstimator):
    """Transformer from a trained :class:`Network` to its pruned copy.

    ``fit`` scores the network and stores the masks; ``X``/``y`` are only
    needed by data-dependent criteria (activation statistics, Hessian).
    """

    def __init__(self, criterion="LAP", tau=1, p=0.0, q=0.5, scope="layerwise",
                 structure="unstructured", order="simultaneous", sequential_steps=1,
                 random_state=0):
        self.criterion = criterion
        self.tau = tau
        self.p = p
        self.q = q
        self.scope = scope
        self.structure = structure
        self.order = order
        self.sequential_steps = sequential_steps
        self.random_state = random_state

    def config(self) -> PruneConfig:
        return PruneConfig(criterion=self.criterion, schedule=SparsitySchedule(self.p, self.q, self.tau),
                           scope=self.scope, structure=self.structure, order=self.order,
                           sequential_steps=self.sequential_steps, seed=self.random_state)

    def fit(self, net, X=None, y=None):
        if not isinstance(net, Network):
            raise TypeError("LookaheadPruner.fit expects a Network")
        data = None
        if X is not None:
            X = check_array(X, allow_nd=True, dtype=np.float64)
            labels = np.zeros(len(X), dtype=np.int64) if y is None else np.asarray(y)
            data = Dataset(X, labels, max(int(labels.max(initial=0)) + 1, net.n_classes))
        pruned, self.masks_ = prune(net, self.config(), data=data)
        self.surviving_fraction_ = pruned.surviving_fraction()
        return self

    def transform(self, net):
        check_is_fitted(self, "masks_")
        out = net.copy()
        out.attach_masks(self.masks_)
        return out


class PrunedNetworkClassifier(NetworkClassifier):
    """Train, prune, and retrain in one ``fit``.

    After fitting, ``dense_network_`` holds the unpruned model, ``network_``
    the retrained sparse one and ``masks_`` the masks.
    """

    def __init__(self, architecture="fcn-small", steps=2000, learning_rate=1.2e-3,
                 batch_size=60, batchnorm=False, random_state=0, criterion="LAP", tau=1,
                 p=0.0, q=0.5, retrain_steps=2000):
        super().__init__(architecture, steps, learning_rate, batch_size, batchnorm, random_state)
        self.criterion = criterion
        self.tau = tau
        self.p = p
        self.q = q
        self.retrain_steps = retrain_steps

    def fit(self, X, y):
        super().fit(X, y)
        data = self._dataset(X, y)
        self.dense_network_ = self.network_
        pruner = LookaheadPruner(criterion=self.criterion, tau=self.tau, p=self.p, q=self.q,
                                 random_state=self.random_state)
        pruner.fit(self.dense_network_, data.inputs, data.labels)
        self.masks_ = pruner.masks_
        cfg = self._train_config()
        cfg.retrain_steps = self.retrain_steps
        self.network_ = retrain(pruner.transform(self.dense_network_), data, cfg)
        self.surviving_fraction_ = self.network_.surviving_fraction()
        return self
