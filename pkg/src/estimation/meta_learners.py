"""S- and T-learners for conditional average treatment effects."""
from dataclasses import dataclass
import logging

import numpy as np

from estimation.table import EffectEstimate, adjustment_design
from learners.encoder import FeatureEncoder
from learners.linear import REGRESSION
from learners.selection import LearnerSpec, fit_learner

logger = logging.getLogger(__name__)


def _regression_spec(learner):
    if isinstance(learner, dict):
        learner = LearnerSpec.from_dict(learner, task=REGRESSION)
    return learner


def with_treatment(X, a):
    """Append the treatment indicator as the last feature column."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
    return np.column_stack([X, a])


@dataclass(frozen=True)
class SLearnerFit:
    encoder: FeatureEncoder
    model: object

    def cate(self, frame):
        X = self.encoder.transform(frame)
        return self.model.predict(with_treatment(X, 1.0)) - self.model.predict(with_treatment(X, 0.0))


@dataclass(frozen=True)
class TLearnerFit:
    encoder: FeatureEncoder
    model0: object
    model1: object

    def cate(self, frame):
        X = self.encoder.transform(frame)
        return self.model1.predict(X) - self.model0.predict(X)


def estimate_s_learner(table, learner, seed=0, name="s_learner"):
    """One outcome model mu(z, a); CATE(z) = mu(z, 1) - mu(z, 0)."""
    learner = _regression_spec(learner)
    encoder, X = adjustment_design(table)
    model = fit_learner(learner, with_treatment(X, table.a), table.y, seed=seed)
    fit = SLearnerFit(encoder, model)
    cate = fit.cate(table.frame)
    logger.info("S-learner (%s): ATE %.2f", learner.family, cate.mean())
    return EffectEstimate(estimator=name, ate=float(cate.mean()), cate=cate, fit=fit,
                          diagnostics={"family": learner.family})


def estimate_t_learner(table, learner, learner1=None, seed=0, name="t_learner"):
    """Separate outcome models per arm; CATE(z) = mu1(z) - mu0(z).

    ``learner1`` overrides the treated-arm learner (e.g. separately tuned).
    """
    learner = _regression_spec(learner)
    learner1 = _regression_spec(learner1) or learner
    table.require_both_arms()
    encoder, X = adjustment_design(table)
    a, y = table.a, table.y
    model0 = fit_learner(learner, X[a == 0], y[a == 0], seed=seed)
    model1 = fit_learner(learner1, X[a == 1], y[a == 1], seed=seed)
    fit = TLearnerFit(encoder, model0, model1)
    cate = fit.cate(table.frame)
    logger.info("T-learner (%s): ATE %.2f", learner.family, cate.mean())
    return EffectEstimate(estimator=name, ate=float(cate.mean()), cate=cate, fit=fit,
                          diagnostics={"family": learner.family})
