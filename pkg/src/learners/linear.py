"""Ridge regression and L2-penalized multinomial logistic regression."""
from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp, softmax

from common.errors import DataError, NumericError

logger = logging.getLogger(__name__)

REGRESSION = "regression"
CLASSIFICATION = "classification"


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise DataError(f"dimension mismatch: X has {X.shape[0]} rows, y has {y.shape[0]}")
    if X.shape[0] < 1:
        raise DataError("cannot fit on an empty dataset")
    if not np.isfinite(X).all():
        raise NumericError("features contain non-finite values")
    return X, y


def _weights(sample_weight, n):
    if sample_weight is None:
        return np.ones(n)
    w = np.asarray(sample_weight, dtype=float)
    if w.shape != (n,) or (w < 0).any() or w.sum() <= 0:
        raise DataError("sample weights must be non-negative, one per row, with positive sum")
    return w


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray
    intercept: float
    alpha: float
    train_rmse: float
    family: str = "ridge"
    task: str = REGRESSION

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X @ self.coef + self.intercept

    def to_state(self):
        meta = {"family": self.family, "alpha": self.alpha, "intercept": self.intercept,
                "train_rmse": self.train_rmse}
        return meta, {"coef": self.coef}

    @classmethod
    def from_state(cls, meta, arrays):
        return cls(coef=arrays["coef"], intercept=meta["intercept"], alpha=meta["alpha"],
                   train_rmse=meta["train_rmse"])


def fit_ridge(X, y, alpha=1.0, sample_weight=None):
    """Weighted ridge regression with an unpenalized intercept.

    Minimizes sum_i w_i (x_i.b + c - y_i)^2 + alpha * |b|^2.
    """
    X, y = _check_xy(X, y)
    y = y.astype(float)
    if alpha < 0:
        raise DataError(f"ridge penalty must be non-negative, got {alpha}")
    w = _weights(sample_weight, len(y))

    x_mean = np.average(X, axis=0, weights=w) if X.shape[1] else np.zeros(0)
    y_mean = float(np.average(y, weights=w))
    Xc, yc = X - x_mean, y - y_mean

    gram = Xc.T @ (Xc * w[:, None]) + alpha * np.eye(X.shape[1])
    rhs = Xc.T @ (w * yc)
    if X.shape[1] == 0:
        coef = np.zeros(0)
    elif alpha > 0:
        try:
            coef = linalg.solve(gram, rhs, assume_a="pos")
        except linalg.LinAlgError:
            coef = linalg.lstsq(gram, rhs)[0]
    else:
        coef = linalg.lstsq(gram, rhs)[0]

    intercept = y_mean - float(x_mean @ coef)
    residual = X @ coef + intercept - y
    rmse = float(np.sqrt(np.average(residual ** 2, weights=w)))
    return RidgeModel(coef=coef, intercept=intercept, alpha=float(alpha), train_rmse=rmse)


def logistic_loss_and_grad(params, X, Y, C, w):
    """Penalized mean negative log-likelihood of a softmax model and its gradient.

    params packs the (d, K) weight matrix row-major followed by K intercepts.
    Objective: sum_i w_i NLL_i / sum(w) + |W|^2 / (2 C sum(w)).
    """
    d, K = X.shape[1], Y.shape[1]
    W = params[: d * K].reshape(d, K)
    b = params[d * K:]
    total = w.sum()

    logits = X @ W + b
    lse = logsumexp(logits, axis=1)
    nll = float(w @ (lse - (Y * logits).sum(axis=1))) / total
    loss = nll + float((W ** 2).sum()) / (2.0 * C * total)

    residual = (np.exp(logits - lse[:, None]) - Y) * w[:, None]
    grad_W = X.T @ residual / total + W / (C * total)
    grad_b = residual.sum(axis=0) / total
    return loss, np.concatenate([grad_W.ravel(), grad_b])


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: np.ndarray
    classes: tuple
    C: float
    converged: bool = True
    n_iter: int = 0
    family: str = "logistic"
    task: str = CLASSIFICATION

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X @ self.coef + self.intercept

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return np.asarray(self.classes, dtype=object)[self.decision_function(X).argmax(axis=1)]

    def to_state(self):
        meta = {"family": self.family, "C": self.C, "classes": list(self.classes),
                "converged": self.converged, "n_iter": self.n_iter}
        return meta, {"coef": self.coef, "intercept": self.intercept}

    @classmethod
    def from_state(cls, meta, arrays):
        return cls(coef=arrays["coef"], intercept=arrays["intercept"], classes=tuple(meta["classes"]),
                   C=meta["C"], converged=meta["converged"], n_iter=meta["n_iter"])


def one_hot_labels(y, classes):
    index = {c: i for i, c in enumerate(classes)}
    try:
        codes = np.array([index[v] for v in y], dtype=int)
    except KeyError as err:
        raise DataError(f"label {err.args[0]!r} is not among the declared classes") from err
    Y = np.zeros((len(codes), len(classes)))
    Y[np.arange(len(codes)), codes] = 1.0
    return Y


def fit_multinomial_logistic(X, y, C=1.0, classes=None, sample_weight=None, max_iter=1000, tol=1e-6):
    """Multinomial logistic regression with an L2 penalty of strength 1/C.

    Args:
        X: Feature matrix (n, d)
        y: Class labels
        C: Inverse penalty strength, > 0
        classes: Optional full label order; defaults to the sorted observed labels
        sample_weight: Optional non-negative row weights
        max_iter: L-BFGS iteration cap
        tol: Gradient tolerance

    Returns:
        LogisticModel with one logit column per class
    """
    X, y = _check_xy(X, y)
    if C <= 0:
        raise DataError(f"inverse penalty C must be positive, got {C}")
    observed = np.unique(y)
    if len(observed) < 2:
        raise NumericError("multinomial logistic regression needs at least 2 classes in y")
    classes = tuple(classes) if classes is not None else tuple(observed.tolist())
    Y = one_hot_labels(y, classes)
    w = _weights(sample_weight, len(y))

    d, K = X.shape[1], len(classes)
    result = optimize.minimize(
        logistic_loss_and_grad,
        np.zeros(d * K + K),
        args=(X, Y, float(C), w),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15},
    )
    if not np.isfinite(result.x).all():
        raise NumericError("logistic regression produced non-finite weights")
    if not result.success:
        logger.debug("L-BFGS stopped before convergence: %s", result.message)

    return LogisticModel(
        coef=result.x[: d * K].reshape(d, K),
        intercept=result.x[d * K:],
        classes=classes,
        C=float(C),
        converged=bool(result.success),
        n_iter=int(result.nit),
    )
