"""Scores against ground-truth effects and percentile bootstrap intervals."""
import logging

import numpy as np
import pandas as pd
from sklearn.metrics import r2_score

from common.errors import DataError, EmptyDataError, IncomeScmError, NumericError

logger = logging.getLogger(__name__)


def r2_cate(pred, truth):
    """Coefficient of determination of predicted against true per-subject effects."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DataError(f"prediction length {len(pred)} differs from ground truth length {len(truth)}")
    if len(truth) < 2:
        raise DataError("R^2 needs at least 2 subjects")
    if np.var(truth) == 0:
        raise NumericError("ground-truth effects have zero variance; R^2 is undefined")
    return float(r2_score(truth, pred))


def absolute_error(estimate, truth):
    return abs(float(estimate) - float(truth))


def bootstrap_ci(statistic, data, iterations=1000, alpha=0.05, seed=0):
    """Percentile interval of ``statistic`` over row resamples of ``data``.

    Args:
        statistic: Callable taking the resampled arrays positionally
        data: Array or tuple of equal-length arrays, resampled jointly
        iterations: Number of bootstrap draws
        alpha: Two-sided level; the interval covers 1 - alpha
        seed: Resampling seed

    Returns:
        (lo, hi), widened if needed so that it contains the full-data statistic
    """
    arrays = tuple(np.asarray(d) for d in (data if isinstance(data, tuple) else (data,)))
    n = len(arrays[0])
    if n == 0:
        raise EmptyDataError("bootstrap sample")
    if any(len(d) != n for d in arrays):
        raise DataError("bootstrap arrays differ in length")
    if not 0 < alpha < 1:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")

    point = float(statistic(*arrays))
    rng = np.random.default_rng(seed)
    stats = np.empty(iterations)
    for b in range(iterations):
        idx = rng.integers(0, n, n)
        try:
            stats[b] = statistic(*(d[idx] for d in arrays))
        except IncomeScmError:
            stats[b] = np.nan
    failed = int(np.isnan(stats).sum())
    if failed == iterations:
        logger.warning("every bootstrap draw failed; reporting the point estimate as the interval")
        return point, point
    if failed:
        logger.debug("%d of %d bootstrap draws were undefined", failed, iterations)
    lo, hi = np.nanpercentile(stats, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return min(float(lo), point), max(float(hi), point)


def education_bins(education_num, bins=16, levels=16):
    """Bin index 1..bins of education-num codes 1..levels; bins == levels keeps the codes."""
    codes = np.asarray(education_num, dtype=float)
    return np.clip(np.floor((codes - 1) * bins / levels).astype(np.int64) + 1, 1, bins)


def stratified_cate(pred, education_num, truth, bins=16, warn=True):
    """Per-bin means of predicted and true effects and the R^2 between them.

    Bins without subjects are listed in ``excluded`` and left out of the R^2.

    Returns:
        (per-bin DataFrame, R^2 over non-empty bins, excluded bin ids)
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if not len(pred) == len(truth) == len(education_num):
        raise DataError("stratified inputs differ in length")
    frame = pd.DataFrame({"education_bin": education_bins(education_num, bins), "pred": pred, "truth": truth})
    grouped = frame.groupby("education_bin").agg(n=("truth", "size"), ground_truth=("truth", "mean"),
                                                  prediction=("pred", "mean"))
    grouped = grouped.reindex(pd.RangeIndex(1, bins + 1, name="education_bin"))
    grouped["n"] = grouped["n"].fillna(0).astype(int)
    excluded = [int(b) for b in grouped.index[grouped["n"] == 0]]
    if excluded and warn:
        logger.warning("education bins without subjects: %s", excluded)
    kept = grouped[grouped["n"] > 0]
    if len(kept) < 2 or kept["ground_truth"].var() == 0:
        score = float("nan")
    else:
        score = r2_cate(kept["prediction"].to_numpy(), kept["ground_truth"].to_numpy())
    return grouped.reset_index(), score, excluded
