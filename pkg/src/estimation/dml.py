"""Double machine learning with the Robinson residual-on-residual final stage.

Nuisances M_Y(z) = E[Y | z] and M_A(z) = P(A = 1 | z) are cross-fitted on
contiguous folds. The final stage regresses (y - M_Y) / (a - M_A) on z with
sample weights (a - M_A)^2.
"""
from dataclasses import dataclass
import logging

import numpy as np
from sklearn.model_selection import KFold

from common.errors import ConfigError, NumericError
from estimation.table import EffectEstimate, adjustment_design
from learners.encoder import FeatureEncoder
from learners.linear import CLASSIFICATION, REGRESSION
from learners.selection import LearnerSpec, fit_learner

logger = logging.getLogger(__name__)

CONSTANT = "constant"
DEFAULT_FOLDS = 5
DEFAULT_DELTA = 0.0


@dataclass(frozen=True)
class CrossFit:
    outcome: np.ndarray
    propensity: np.ndarray
    folds: list


def cross_fit(X, a, y, outcome_learner, propensity_learner, k=DEFAULT_FOLDS, seed=0):
    """Out-of-fold predictions of both nuisance models."""
    if len(y) < k:
        raise NumericError(f"fewer rows ({len(y)}) than cross-fitting folds ({k})")
    m_y = np.empty(len(y))
    m_a = np.empty(len(y))
    folds = []
    for train, test in KFold(n_splits=k, shuffle=False).split(X):
        model_y = fit_learner(outcome_learner, X[train], y[train], seed=seed)
        model_a = fit_learner(propensity_learner, X[train], a[train], classes=(0, 1), seed=seed)
        m_y[test] = model_y.predict(X[test])
        m_a[test] = model_a.predict_proba(X[test])[:, 1]
        folds.append((int(test[0]), int(test[-1]) + 1))
    return CrossFit(outcome=m_y, propensity=m_a, folds=folds)


def robinson_target(a, y, m_a, m_y, delta=DEFAULT_DELTA):
    """Pseudo-outcome, weights (a - M_A)^2 and the mask of usable rows.

    Rows with a zero residual carry zero weight and are never usable; a positive
    ``delta`` also leaves out rows with |a - M_A| < delta.
    """
    ra = np.asarray(a, dtype=float) - m_a
    ry = np.asarray(y, dtype=float) - m_y
    usable = (ra != 0) & (np.abs(ra) >= delta)
    if not usable.any():
        raise NumericError("treatment residuals are all below the threshold: no treatment variation")
    target = np.zeros_like(ry)
    target[usable] = ry[usable] / ra[usable]
    return target, ra ** 2, usable


@dataclass(frozen=True)
class DmlFit:
    encoder: FeatureEncoder
    final: object
    theta: float = None

    def cate(self, frame):
        if self.final is None:
            return np.full(len(frame), self.theta)
        return self.final.predict(self.encoder.transform(frame))


def _spec(learner, task):
    if isinstance(learner, dict):
        return LearnerSpec.from_dict(learner, task=task)
    return learner


def estimate_dml(table, outcome_learner, propensity_learner, final_learner=CONSTANT, k=DEFAULT_FOLDS,
                 delta=DEFAULT_DELTA, seed=0, name="dml"):
    """CATE from a weighted regression of the Robinson pseudo-outcome.

    Args:
        table: EstimationTable
        outcome_learner: Regression LearnerSpec for M_Y
        propensity_learner: Classification LearnerSpec for M_A
        final_learner: Regression LearnerSpec for the final stage, or "constant"
            for the partialled-out coefficient sum(ra * ry) / sum(ra^2)
        k: Cross-fitting folds (contiguous)
        delta: Optional threshold; rows with |a - M_A| below it are left out of the final stage
    """
    outcome_learner = _spec(outcome_learner, REGRESSION)
    propensity_learner = _spec(propensity_learner, CLASSIFICATION)
    table.require_both_arms()
    encoder, X = adjustment_design(table)
    a, y = table.a, table.y

    nuisance = cross_fit(X, a, y, outcome_learner, propensity_learner, k, seed)
    target, weight, usable = robinson_target(a, y, nuisance.propensity, nuisance.outcome, delta)
    if (~usable).any():
        logger.info("DML final stage leaves out %d rows with |a - M_A| < %g", int((~usable).sum()), delta)

    if final_learner == CONSTANT:
        theta = float(np.average(target[usable], weights=weight[usable]))
        fit = DmlFit(encoder, final=None, theta=theta)
    else:
        final_learner = _spec(final_learner, REGRESSION)
        if final_learner is None or final_learner.task != REGRESSION:
            raise ConfigError("DML final stage must be a regression learner or 'constant'")
        final = fit_learner(final_learner, X[usable], target[usable], sample_weight=weight[usable], seed=seed)
        fit = DmlFit(encoder, final=final)

    cate = fit.cate(table.frame)
    logger.info("DML (%s): ATE %.2f", getattr(final_learner, "family", CONSTANT), cate.mean())
    return EffectEstimate(
        estimator=name, ate=float(cate.mean()), cate=cate, fit=fit,
        diagnostics={"folds": nuisance.folds, "left_out": int((~usable).sum()),
                     "final": getattr(final_learner, "family", CONSTANT)},
    )
