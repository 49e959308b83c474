"""Minibatch-trained ANN classifiers: plain cross-entropy or expected reward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_features, check_fitted_net, check_labels
from .exceptions import InvalidParamError
from .nn import (
    AdamState,
    HyperParams,
    Mlp,
    adam_update_,
    cross_entropy_head,
    forward,
    init_mlp,
    loss_and_gradients,
    softmax,
)
from .rl import RewardMatrix, resolve_reward_matrix
from .signal import N_CLASSES

LOSS_KINDS = ("cross_entropy", "expected_reward")


def expected_reward_loss(logits, actual, matrix: RewardMatrix):
    """Negative expected reward under ``softmax(logits)``.

    Works on one example (``logits`` 1-D, ``actual`` scalar) or a batch.
    Returns ``(loss, dlogits)``; for a batch the loss is the mean and
    ``dlogits`` holds the per-example derivatives.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    actual = np.asarray(actual, dtype=np.int64).reshape(-1)
    p = softmax(z)
    r = matrix.array[actual]
    expected = np.sum(p * r, axis=1)
    # d/dz_j of -sum_a p_a r_a  =  -p_j (r_j - sum_a p_a r_a)
    grad = -p * (r - expected[:, None])
    if single:
        return float(-expected[0]), grad[0]
    return float(-expected.mean()), grad


@dataclass(frozen=True)
class TrainConfig:
    hp: HyperParams = HyperParams()
    loss_kind: str = "cross_entropy"
    reward_matrix: RewardMatrix | None = None
    class_weights: tuple | None = None
    shuffle_seed: int | None = None  # defaults to the training seed

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidParamError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.loss_kind == "expected_reward" and self.reward_matrix is None:
            raise InvalidParamError("expected_reward loss needs a reward matrix")


@dataclass(eq=False)
class TrainResult:
    net: Mlp
    loss_log: list = field(default_factory=list)  # mean loss per epoch


def _head(cfg: TrainConfig, targets):
    if cfg.loss_kind == "cross_entropy":
        return lambda out: cross_entropy_head(out, targets, cfg.class_weights)
    return lambda out: expected_reward_loss(out, targets, cfg.reward_matrix)


def train_ann(X, y, cfg: TrainConfig = TrainConfig(), seed=0) -> TrainResult:
    """Shuffled minibatch Adam training; the final short batch is kept."""
    X = check_features(X)
    y = check_labels(y, X.shape[0])
    if cfg.hp.batch_size > X.shape[0]:
        raise InvalidParamError("batch_size exceeds the number of training examples")
    init_seed, default_shuffle = np.random.SeedSequence(seed).spawn(2)
    shuffle_rng = np.random.default_rng(default_shuffle if cfg.shuffle_seed is None else cfg.shuffle_seed)
    net = init_mlp(X.shape[1], N_CLASSES, seed=init_seed)
    adam = AdamState.for_net(net, cfg.hp.beta1, cfg.hp.beta2, cfg.hp.adam_eps)
    bs = cfg.hp.batch_size
    log = []
    for _ in range(cfg.hp.epochs):
        order = shuffle_rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, order.size, bs):
            idx = order[start:start + bs]
            loss, grads = loss_and_gradients(net, X[idx], _head(cfg, y[idx]))
            adam_update_(net, grads, adam, cfg.hp.learning_rate)
            total += loss * idx.size
        log.append(total / X.shape[0])
    return TrainResult(net, log)


def evaluate_model(net: Mlp, X) -> np.ndarray:
    X = check_features(X, net.num_features)
    if X.shape[0] == 0:
        raise InvalidParamError("empty test set")
    return np.argmax(forward(net, X), axis=1)


class ANNClassifier(ClassifierMixin, BaseEstimator):
    """Three-layer ReLU network trained with Adam.

    ``loss="expected_reward"`` swaps cross-entropy for the negative
    expected reward of the softmax distribution under ``reward_matrix``.
    ``class_weight`` rescales per-class cross-entropy terms.
    """

    def __init__(
        self,
        loss="cross_entropy",
        reward_matrix=None,
        class_weight=None,
        epochs=50,
        batch_size=64,
        learning_rate=0.001,
        random_state=0,
    ):
        self.loss = loss
        self.reward_matrix = reward_matrix
        self.class_weight = class_weight
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        matrix = resolve_reward_matrix(self.reward_matrix) if self.loss == "expected_reward" else None
        weights = None if self.class_weight is None else tuple(float(w) for w in self.class_weight)
        cfg = TrainConfig(
            hp=HyperParams(batch_size=self.batch_size, learning_rate=self.learning_rate, epochs=self.epochs),
            loss_kind=self.loss,
            reward_matrix=matrix,
            class_weights=weights,
        )
        result = train_ann(X, y, cfg, seed=self.random_state)
        self.net_ = result.net
        self.loss_curve_ = result.loss_log
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = self.net_.num_features
        return self

    def decision_function(self, X):
        check_fitted_net(self)
        return forward(self.net_, check_features(X, self.n_features_in_))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)
