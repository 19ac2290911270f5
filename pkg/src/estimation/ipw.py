"""Inverse propensity weighting: Horvitz-Thompson and Hajek (self-normalized) means."""
import logging

import numpy as np

from common.errors import ConfigError, NumericError
from estimation.table import EffectEstimate, adjustment_design
from learners.linear import CLASSIFICATION
from learners.selection import LOGISTIC, LearnerSpec, fit_learner

logger = logging.getLogger(__name__)

HT = "ht"
HAJEK = "hajek"
DEFAULT_CLIP = 0.01


def clip_propensity(e, clip=DEFAULT_CLIP):
    """Clip into [clip, 1 - clip]; clip = 0 leaves scores untouched."""
    if not 0.0 <= clip < 0.5:
        raise ConfigError(f"propensity clip must lie in [0, 0.5), got {clip}")
    e = np.asarray(e, dtype=float)
    if clip == 0:
        return e
    clipped = (e < clip) | (e > 1.0 - clip)
    if clipped.any():
        logger.warning("Clipped %d of %d propensity scores to [%g, %g]", int(clipped.sum()), len(e), clip, 1 - clip)
    return np.clip(e, clip, 1.0 - clip)


def ipw_means(a, y, e, variant=HAJEK):
    """Weighted outcome means (mu1, mu0) under weights a/e and (1-a)/(1-e)."""
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = np.where(a == 1, 1.0 / e, 0.0)
        w0 = np.where(a == 0, 1.0 / (1.0 - e), 0.0)
    if not (np.isfinite(w1).all() and np.isfinite(w0).all()):
        raise NumericError("propensity of 0 or 1 within its own arm gives infinite weights")
    s1, s0 = w1.sum(), w0.sum()
    if s1 <= 0 or s0 <= 0:
        raise NumericError(f"an arm has zero total weight (treated {s1:.3g}, control {s0:.3g})")
    if variant == HT:
        n = len(y)
        return float(w1 @ y) / n, float(w0 @ y) / n
    if variant == HAJEK:
        return float(w1 @ y) / s1, float(w0 @ y) / s0
    raise ConfigError(f"unknown IPW variant '{variant}'")


def estimate_ipw(table, learner=None, variant=HAJEK, clip=DEFAULT_CLIP, propensity=None, seed=0,
                 name="ipw"):
    """ATE by inverse propensity weighting.

    Args:
        table: EstimationTable
        learner: LearnerSpec (or dict) for the propensity model; logistic when omitted
        variant: "ht" or "hajek"
        clip: Propensities are clipped to [clip, 1 - clip]
        propensity: Known propensity scores; skips model fitting when given

    Returns:
        EffectEstimate without conditional effects
    """
    a, y = table.a, table.y
    if propensity is None:
        if isinstance(learner, dict):
            learner = LearnerSpec.from_dict(learner, task=CLASSIFICATION)
        learner = learner or LearnerSpec(LOGISTIC, CLASSIFICATION)
        table.require_both_arms()
        _, X = adjustment_design(table)
        model = fit_learner(learner, X, a, classes=(0, 1), seed=seed)
        propensity = model.predict_proba(X)[:, 1]
    e = clip_propensity(propensity, clip)
    mu1, mu0 = ipw_means(a, y, e, variant)
    logger.info("IPW (%s): mu1 %.2f, mu0 %.2f, ATE %.2f", variant, mu1, mu0, mu1 - mu0)
    return EffectEstimate(estimator=name, ate=mu1 - mu0,
                          diagnostics={"variant": variant, "clip": clip, "mu1": mu1, "mu0": mu0})
