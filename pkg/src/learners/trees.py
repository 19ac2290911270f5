"""Bagged and gradient-boosted tree ensembles.

Single trees are grown with scikit-learn and flattened into plain node arrays,
so fitted ensembles predict without scikit-learn objects and persist as npz.
"""
from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy.special import softmax
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from common.errors import DataError, NumericError
from learners.linear import CLASSIFICATION, REGRESSION, _check_xy, _weights, one_hot_labels

logger = logging.getLogger(__name__)

BAGGED = "bagged_trees"
BOOSTED = "boosted_trees"
LEAF = -1
PROBA_FLOOR = 1e-12

BAGGED_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_samples_leaf": 5,
                   "max_features": None, "bootstrap": True}
BOOSTED_DEFAULTS = {"n_trees": 100, "max_depth": 3, "min_samples_leaf": 1, "learning_rate": 0.3}


@dataclass(frozen=True)
class FlatTree:
    """Binary tree as parallel node arrays; value has one row per node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_sklearn(cls, estimator, value=None):
        tree = estimator.tree_
        if value is None:
            value = tree.value[:, 0, :]
        return cls(
            feature=tree.feature.astype(np.int64),
            threshold=tree.threshold.astype(float),
            left=tree.children_left.astype(np.int64),
            right=tree.children_right.astype(np.int64),
            value=np.asarray(value, dtype=float),
        )

    def apply(self, X):
        X = np.asarray(X, dtype=np.float32)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.left[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            go_left = X[idx, self.feature[current]] <= self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            active = self.left[node] != LEAF
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    @property
    def depth(self):
        depth = np.zeros(len(self.left), dtype=int)
        for i in range(len(self.left)):
            if self.left[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


@dataclass(frozen=True)
class TreeEnsemble:
    family: str
    task: str
    trees: tuple
    init: np.ndarray
    hyperparameters: dict
    classes: tuple = ()
    learning_rate: float = 1.0
    train_rmse: float = float("nan")

    def _raw(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.family == BAGGED:
            return sum(tree.predict(X) for tree in self.trees) / len(self.trees)
        total = np.tile(self.init, (X.shape[0], 1))
        for tree in self.trees:
            total = total + self.learning_rate * tree.predict(X)
        return total

    def predict(self, X):
        raw = self._raw(X)
        if self.task == REGRESSION:
            return raw[:, 0]
        return np.asarray(self.classes, dtype=object)[self.predict_proba(X).argmax(axis=1)]

    def predict_proba(self, X):
        if self.task != CLASSIFICATION:
            raise DataError("predict_proba is only defined for classification ensembles")
        raw = self._raw(X)
        if self.family == BAGGED:
            return raw / raw.sum(axis=1, keepdims=True)
        return softmax(raw, axis=1)

    def decision_function(self, X):
        """Per-class logits; bagged probabilities are floored before the log."""
        if self.family == BOOSTED:
            return self._raw(X)
        return np.log(np.clip(self.predict_proba(X), PROBA_FLOOR, None))

    def to_state(self):
        meta = {
            "family": self.family,
            "task": self.task,
            "hyperparameters": self.hyperparameters,
            "classes": list(self.classes),
            "learning_rate": self.learning_rate,
            "train_rmse": self.train_rmse,
            "n_nodes": [len(t.left) for t in self.trees],
        }
        arrays = {"init": self.init}
        for key in ("feature", "threshold", "left", "right", "value"):
            arrays[key] = np.concatenate([getattr(t, key) for t in self.trees])
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        bounds = np.concatenate([[0], np.cumsum(meta["n_nodes"])])
        trees = tuple(
            FlatTree(**{key: arrays[key][lo:hi] for key in ("feature", "threshold", "left", "right", "value")})
            for lo, hi in zip(bounds[:-1], bounds[1:])
        )
        return cls(
            family=meta["family"],
            task=meta["task"],
            trees=trees,
            init=arrays["init"],
            hyperparameters=meta["hyperparameters"],
            classes=tuple(meta["classes"]),
            learning_rate=meta["learning_rate"],
            train_rmse=meta["train_rmse"],
        )


def _tree_seed(rng):
    return int(rng.integers(0, 2**31 - 1))


def _check_leaf_budget(X, min_samples_leaf):
    if X.shape[0] < 2 * min_samples_leaf:
        raise NumericError(
            f"insufficient samples: {X.shape[0]} rows for min_samples_leaf={min_samples_leaf}"
        )


def fit_bagged_trees(X, y, task=REGRESSION, classes=None, sample_weight=None, seed=0, **hp):
    """Average of trees grown on bootstrap resamples (a random forest without extras).

    Classification trees store per-leaf class distributions aligned to ``classes``.
    """
    params = {**BAGGED_DEFAULTS, **hp}
    X, y = _check_xy(X, y)
    _check_leaf_budget(X, params["min_samples_leaf"])
    w = _weights(sample_weight, len(y))
    rng = np.random.default_rng(seed)
    n = X.shape[0]

    if task == CLASSIFICATION:
        classes = tuple(classes) if classes is not None else tuple(np.unique(y).tolist())
        codes = one_hot_labels(y, classes).argmax(axis=1)

    trees = []
    for _ in range(int(params["n_trees"])):
        idx = rng.integers(0, n, n) if params["bootstrap"] else np.arange(n)
        kwargs = dict(max_depth=params["max_depth"], min_samples_leaf=params["min_samples_leaf"],
                      max_features=params["max_features"], random_state=_tree_seed(rng))
        if task == REGRESSION:
            est = DecisionTreeRegressor(**kwargs).fit(X[idx], y[idx].astype(float), sample_weight=w[idx])
            trees.append(FlatTree.from_sklearn(est))
        else:
            est = DecisionTreeClassifier(**kwargs).fit(X[idx], codes[idx], sample_weight=w[idx])
            raw = est.tree_.value[:, 0, :]
            value = np.zeros((raw.shape[0], len(classes)))
            value[:, est.classes_] = raw / raw.sum(axis=1, keepdims=True)
            trees.append(FlatTree.from_sklearn(est, value))

    model = TreeEnsemble(
        family=BAGGED,
        task=task,
        trees=tuple(trees),
        init=np.zeros(1 if task == REGRESSION else len(classes)),
        hyperparameters=params,
        classes=tuple(classes) if task == CLASSIFICATION else (),
    )
    if task == REGRESSION:
        residual = model.predict(X) - y.astype(float)
        model = replace(model, train_rmse=float(np.sqrt(np.average(residual**2, weights=w))))
    return model


def fit_boosted_trees(X, y, task=REGRESSION, classes=None, sample_weight=None, seed=0, **hp):
    """Gradient-boosted trees.

    Regression stages fit squared-error residuals. Classification keeps one
    score per class, fits each stage to the softmax residuals and replaces leaf
    values with a one-step Newton update.
    """
    params = {**BOOSTED_DEFAULTS, **hp}
    X, y = _check_xy(X, y)
    _check_leaf_budget(X, params["min_samples_leaf"])
    w = _weights(sample_weight, len(y))
    rng = np.random.default_rng(seed)
    eta = float(params["learning_rate"])
    tree_kwargs = dict(max_depth=params["max_depth"], min_samples_leaf=params["min_samples_leaf"])

    if task == REGRESSION:
        y = y.astype(float)
        init = np.array([np.average(y, weights=w)])
        F = np.full(len(y), init[0])
        trees = []
        for _ in range(int(params["n_trees"])):
            est = DecisionTreeRegressor(random_state=_tree_seed(rng), **tree_kwargs)
            est.fit(X, y - F, sample_weight=w)
            tree = FlatTree.from_sklearn(est)
            F = F + eta * tree.predict(X)[:, 0]
            trees.append(tree)
        rmse = float(np.sqrt(np.average((F - y) ** 2, weights=w)))
        return TreeEnsemble(family=BOOSTED, task=task, trees=tuple(trees), init=init,
                            hyperparameters=params, learning_rate=eta, train_rmse=rmse)

    classes = tuple(classes) if classes is not None else tuple(np.unique(y).tolist())
    Y = one_hot_labels(y, classes)
    K = len(classes)
    prior = np.clip(np.average(Y, axis=0, weights=w), PROBA_FLOOR, None)
    init = np.log(prior / prior.sum())
    F = np.tile(init, (len(y), 1))
    trees = []
    for _ in range(int(params["n_trees"])):
        P = softmax(F, axis=1)
        residual = Y - P
        est = DecisionTreeRegressor(random_state=_tree_seed(rng), **tree_kwargs)
        est.fit(X, residual, sample_weight=w)
        leaves = est.apply(X)
        n_nodes = est.tree_.node_count
        value = np.zeros((n_nodes, K))
        for k in range(K):
            num = np.bincount(leaves, weights=w * residual[:, k], minlength=n_nodes)
            den = np.bincount(leaves, weights=w * P[:, k] * (1 - P[:, k]), minlength=n_nodes)
            value[:, k] = (K - 1) / K * num / np.maximum(den, 1e-12)
        tree = FlatTree.from_sklearn(est, value)
        F = F + eta * tree.predict(X)
        trees.append(tree)
    if not np.isfinite(F).all():
        raise NumericError("boosted classifier produced non-finite scores")
    return TreeEnsemble(family=BOOSTED, task=task, trees=tuple(trees), init=init,
                        hyperparameters=params, classes=classes, learning_rate=eta)


def fit_tree_ensemble(X, y, task=REGRESSION, family=BAGGED, seed=0, **hp):
    if family == BAGGED:
        return fit_bagged_trees(X, y, task=task, seed=seed, **hp)
    if family == BOOSTED:
        return fit_boosted_trees(X, y, task=task, seed=seed, **hp)
    raise DataError(f"unknown tree family '{family}'")
