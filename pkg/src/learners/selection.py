"""Learner specifications, fitting dispatch and cross-validated hyperparameter selection."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
from sklearn.metrics import r2_score, roc_auc_score
from sklearn.model_selection import KFold, ParameterGrid, ParameterSampler

from common.errors import ConfigError, DataError, NumericError
from learners.linear import (
    CLASSIFICATION,
    REGRESSION,
    LogisticModel,
    RidgeModel,
    fit_multinomial_logistic,
    fit_ridge,
)
from learners.trees import BAGGED, BOOSTED, TreeEnsemble, fit_bagged_trees, fit_boosted_trees

logger = logging.getLogger(__name__)

RIDGE = "ridge"
LOGISTIC = "logistic"
FAMILIES = (RIDGE, LOGISTIC, BAGGED, BOOSTED)
AUC = "auc"
R2 = "r2"

# Hyperparameter ranges searched when selecting estimator nuisance models.
DEFAULT_GRIDS = {
    LOGISTIC: {"C": [0.005, 0.01, 0.05, 0.1, 0.5, 1, 5, 10, 50, 100]},
    RIDGE: {"alpha": [0.01, 0.02, 0.1, 0.2, 1, 2, 10, 20, 100, 200, 1000]},
    BAGGED: {"min_samples_leaf": [5, 10, 20, 50, 100]},
    BOOSTED: {"learning_rate": [0.1, 0.3, 0.5, 0.7], "max_depth": [3, 5, 7, 9]},
}


@dataclass(frozen=True)
class LearnerSpec:
    family: str
    task: str = REGRESSION
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown learner family '{self.family}'")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown learner task '{self.task}'")
        if self.family == RIDGE and self.task != REGRESSION:
            raise ConfigError("ridge is a regression learner")
        if self.family == LOGISTIC and self.task != CLASSIFICATION:
            raise ConfigError("logistic is a classification learner")

    def with_params(self, **params):
        return LearnerSpec(self.family, self.task, {**self.params, **params})

    @classmethod
    def from_dict(cls, payload, task=None):
        payload = dict(payload or {})
        if "family" not in payload:
            raise ConfigError(f"learner entry {payload} lacks a 'family'")
        return cls(family=payload.pop("family"), task=payload.pop("task", task or REGRESSION),
                   params=dict(payload.pop("params", {}), **payload))

    def to_dict(self):
        return {"family": self.family, "task": self.task, "params": dict(self.params)}


def fit_learner(spec, X, y, classes=None, sample_weight=None, seed=0):
    """Fit the learner described by spec; classification models span ``classes``."""
    params = dict(spec.params)
    if spec.family == RIDGE:
        return fit_ridge(X, y, alpha=params.get("alpha", 1.0), sample_weight=sample_weight)
    if spec.family == LOGISTIC:
        return fit_multinomial_logistic(X, y, C=params.get("C", 1.0), classes=classes,
                                        sample_weight=sample_weight,
                                        max_iter=params.get("max_iter", 1000))
    fit = fit_bagged_trees if spec.family == BAGGED else fit_boosted_trees
    if spec.task == CLASSIFICATION:
        params["classes"] = classes
    return fit(X, y, task=spec.task, sample_weight=sample_weight, seed=seed, **params)


def model_from_state(meta, arrays):
    family = meta["family"]
    if family == RIDGE:
        return RidgeModel.from_state(meta, arrays)
    if family == LOGISTIC:
        return LogisticModel.from_state(meta, arrays)
    if family in (BAGGED, BOOSTED):
        return TreeEnsemble.from_state(meta, arrays)
    raise DataError(f"unknown model family '{family}' in stored state")


def score_model(model, X, y, metric):
    """Held-out AUC (one-vs-rest macro for more than two classes) or R^2."""
    if metric == R2:
        return float(r2_score(y, model.predict(X)))
    proba = model.predict_proba(X)
    classes = list(model.classes)
    try:
        if len(classes) == 2:
            return float(roc_auc_score(np.asarray(y) == classes[1], proba[:, 1]))
        present = [i for i, c in enumerate(classes) if c in set(np.asarray(y).tolist())]
        if len(present) < 2:
            return float("nan")
        sub = proba[:, present]
        sub = sub / sub.sum(axis=1, keepdims=True)
        return float(roc_auc_score(y, sub, multi_class="ovr", average="macro",
                                   labels=[classes[i] for i in present]))
    except ValueError:
        return float("nan")


@dataclass(frozen=True)
class CvResult:
    grid: list
    scores: list
    selected: dict
    folds: list
    metric: str
    model: object = None

    @property
    def best_score(self):
        return self.scores[self.grid.index(self.selected)]


def expand_grid(grid, n_samples=20, seed=0):
    """Settings to evaluate: the whole grid, or n_samples drawn uniformly without replacement."""
    if isinstance(grid, (list, tuple)):
        settings = [dict(s) for s in grid]
    else:
        settings = list(ParameterGrid(grid))
        if len(settings) > n_samples:
            settings = list(ParameterSampler(grid, n_iter=n_samples, random_state=seed))
    if not settings:
        raise ConfigError("hyperparameter grid is empty")
    return settings


def cross_validate(spec, X, y, grid=None, k=5, metric=None, n_samples=20, seed=0, workers=1, classes=None):
    """Select hyperparameters by k-fold cross-validation on contiguous folds.

    Args:
        spec: LearnerSpec providing the family and fixed parameters
        X, y: Training data in dataset order
        grid: Dict of value lists or explicit list of settings; family default when omitted
        k: Number of folds
        metric: "auc" or "r2"; chosen from the task when omitted
        n_samples: Cap on evaluated settings
        workers: Thread count for concurrent (setting, fold) fits

    Returns:
        CvResult with the winner refit on all data
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(y) < k:
        raise NumericError(f"fewer samples ({len(y)}) than folds ({k})")
    metric = metric or (AUC if spec.task == CLASSIFICATION else R2)
    if spec.task == CLASSIFICATION and classes is None:
        classes = tuple(np.unique(y).tolist())

    settings = expand_grid(grid if grid is not None else DEFAULT_GRIDS[spec.family], n_samples, seed)
    folds = list(KFold(n_splits=k, shuffle=False).split(X))

    def run(job):
        setting, (train, test) = job
        model = fit_learner(spec.with_params(**setting), X[train], y[train], classes=classes, seed=seed)
        return score_model(model, X[test], y[test], metric)

    jobs = [(s, f) for s in settings for f in folds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fold_scores = list(pool.map(run, jobs))
    else:
        fold_scores = [run(job) for job in jobs]

    per_setting = np.array(fold_scores, dtype=float).reshape(len(settings), k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(per_setting, axis=1)
    means = np.where(np.isnan(means), -np.inf, means)
    best = int(np.argmax(means))
    logger.info("CV %s/%s: best %s=%.4f with %s", spec.family, spec.task, metric, means[best], settings[best])

    model = fit_learner(spec.with_params(**settings[best]), X, y, classes=classes, seed=seed)
    return CvResult(
        grid=settings,
        scores=[float(m) for m in means],
        selected=settings[best],
        folds=[(int(test[0]), int(test[-1]) + 1) for _, test in folds],
        metric=metric,
        model=model,
    )
