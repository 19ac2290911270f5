"""One-nearest-neighbour matching on the encoded adjustment covariates."""
import logging

import numpy as np
from scipy.spatial.distance import cdist

from estimation.table import EffectEstimate, adjustment_design

logger = logging.getLogger(__name__)

CHUNK_ROWS = 2048


def nearest_neighbors(queries, pool, metric="euclidean", chunk=CHUNK_ROWS):
    """Index into ``pool`` of each query's nearest row; ties go to the lowest index."""
    out = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), chunk):
        d = cdist(queries[start:start + chunk], pool, metric=metric)
        out[start:start + chunk] = d.argmin(axis=1)
    return out


def estimate_matching(table, metric="euclidean", name="matching"):
    """ATE where each subject's missing potential outcome is its nearest opposite-arm neighbour's outcome."""
    counts = table.require_both_arms()
    _, X = adjustment_design(table)
    a, y = table.a, table.y
    treated, control = np.flatnonzero(a == 1), np.flatnonzero(a == 0)

    y1 = y.copy()
    y0 = y.copy()
    y0[treated] = y[control[nearest_neighbors(X[treated], X[control], metric)]]
    y1[control] = y[treated[nearest_neighbors(X[control], X[treated], metric)]]
    mu1, mu0 = float(y1.mean()), float(y0.mean())
    logger.info("Matching (%s) over %d treated / %d control: ATE %.2f", metric, counts[1], counts[0], mu1 - mu0)
    return EffectEstimate(estimator=name, ate=mu1 - mu0,
                          diagnostics={"metric": metric, "mu1": mu1, "mu0": mu0})
