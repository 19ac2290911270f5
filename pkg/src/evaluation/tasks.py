"""Benchmark tasks and their evaluation against counterfactual ground truth.

Task 1 adjusts for and conditions on every pre-intervention covariate. Task 2
uses only the direct causes of the intervened studies variable. Task 3 keeps
the Task-1 adjustment set and scores CATE averaged within education bins.
"""
from dataclasses import dataclass, field
import json
import logging

import numpy as np
import pandas as pd

from causal.graph import MINIMAL, adjustment_set
from common.errors import ConfigError, DataError
from estimation.registry import ROSTER, run_estimator
from evaluation.metrics import absolute_error, bootstrap_ci, r2_cate, stratified_cate
from simulator.scm import EDUCATION_NUM, INCOME, STUDIES

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "task", "estimator", "r2_cate", "r2_lo", "r2_hi", "ae_ate", "ae_lo", "ae_hi",
    "ate", "ate_true", "cv_metric", "cv_score", "selected", "excluded_bins",
]


@dataclass(frozen=True)
class TaskSpec:
    id: int
    name: str
    adjustment: tuple
    conditioning: tuple
    stratify: str = None
    bins: int = 16


def node_column(node, t0):
    """Estimation-table column holding an unrolled-graph node, or None when not recorded."""
    variable, t = node
    if t == t0 and variable not in (STUDIES, INCOME):
        return variable
    if t == t0 - 1 and variable in (STUDIES, INCOME):
        return f"{variable}_prev"
    return None


def minimal_columns(graph, t0, horizon):
    """Direct causes of studies at t0, as estimation-table columns."""
    members = adjustment_set(graph, (STUDIES, t0), (INCOME, horizon), MINIMAL).members
    nodes = sorted(members, key=lambda node: (-node[1], graph.position(node[0])))
    missing = [node for node in nodes if node_column(node, t0) is None]
    if missing:
        raise ConfigError(f"direct causes {missing} are not recorded in the estimation table")
    return tuple(node_column(node, t0) for node in nodes)


def default_tasks(graph, covariates, t0=2, horizon=7, bins=16):
    """Task 1-3 specs over the given estimation-table covariates."""
    full = tuple(covariates)
    minimal = minimal_columns(graph, t0, horizon)
    unknown = [c for c in minimal if c not in full]
    if unknown:
        raise ConfigError(f"direct-cause columns {unknown} missing from the estimation table")
    return {
        1: TaskSpec(1, "full pre-intervention covariates", full, full),
        2: TaskSpec(2, "direct causes of the intervention", minimal, minimal),
        3: TaskSpec(3, "education-stratified CATE", full, (EDUCATION_NUM,), stratify=EDUCATION_NUM, bins=bins),
    }


@dataclass(frozen=True)
class MetricReport:
    task: TaskSpec
    rows: pd.DataFrame
    bootstrap: dict
    strata: pd.DataFrame = None
    estimates: dict = field(default_factory=dict, repr=False)

    def row(self, estimator):
        hit = self.rows[self.rows["estimator"] == estimator]
        if hit.empty:
            raise KeyError(estimator)
        return hit.iloc[0]


def _ae_statistic(ate_hat):
    def statistic(pred, truth):
        estimate = pred.mean() if ate_hat is None else ate_hat
        return absolute_error(estimate, truth.mean())
    return statistic


def _stratified_statistic(bins):
    def statistic(pred, education, truth):
        return stratified_cate(pred, education, truth, bins, warn=False)[1]
    return statistic


def evaluate_task(task, benchmark, estimators=ROSTER, overrides=None, tune=True, k=5, n_samples=20,
                  seed=0, workers=1, clip=None, iterations=1000, alpha=0.05, bootstrap_seed=0):
    """Fit each estimator on the observational table and score it on the counterfactual cohort.

    Args:
        task: TaskSpec
        benchmark: CateBenchmark
        estimators: Preset names
        overrides: Mapping preset -> config overrides
        tune: Select nuisance hyperparameters by cross-validation first

    Returns:
        MetricReport with one row per estimator
    """
    truth = benchmark.effects
    if truth is None or len(truth) == 0:
        raise DataError("benchmark carries no ground-truth effects")
    cohort = benchmark.counterfactual
    table = benchmark.observational.with_roles(task.adjustment, task.conditioning)
    boot = {"iterations": iterations, "alpha": alpha, "seed": bootstrap_seed}

    rows, estimates, strata = [], {}, None
    if task.stratify:
        per_bin = stratified_cate(truth, cohort[task.stratify], truth, task.bins)[0]
        strata = per_bin.loc[:, ["education_bin", "ground_truth"]].copy()
    for name in estimators:
        estimate, spec = run_estimator(name, table, tune=tune, overrides=(overrides or {}).get(name), k=k,
                                       n_samples=n_samples, seed=seed, workers=workers, clip=clip)
        estimates[name] = estimate
        row = dict.fromkeys(RESULT_COLUMNS, np.nan)
        row.update(task=task.id, estimator=name, ate_true=benchmark.ate, excluded_bins="",
                   cv_metric=estimate.diagnostics.get("cv_metric", ""),
                   cv_score=estimate.diagnostics.get("cv_score", np.nan),
                   selected=json.dumps({r: s["params"] for r, s in spec.selection.items()}, sort_keys=True))

        if estimate.has_cate:
            pred = estimate.predict_cate(cohort)
            row["ate"] = float(pred.mean())
            ae_stat = _ae_statistic(None)
        else:
            pred = np.full(len(truth), estimate.ate)
            row["ate"] = estimate.ate
            ae_stat = _ae_statistic(estimate.ate)
        row["ae_ate"] = absolute_error(row["ate"], benchmark.ate)
        row["ae_lo"], row["ae_hi"] = bootstrap_ci(ae_stat, (pred, truth), **boot)

        if spec.reports_cate and task.stratify:
            per_bin, score, excluded = stratified_cate(pred, cohort[task.stratify], truth, task.bins)
            strata[name] = per_bin["prediction"].to_numpy()
            row["r2_cate"] = score
            row["r2_lo"], row["r2_hi"] = bootstrap_ci(
                _stratified_statistic(task.bins), (pred, cohort[task.stratify].to_numpy(), truth), **boot)
            row["excluded_bins"] = " ".join(map(str, excluded))
        elif spec.reports_cate:
            row["r2_cate"] = r2_cate(pred, truth)
            row["r2_lo"], row["r2_hi"] = bootstrap_ci(r2_cate, (pred, truth), **boot)
        rows.append(row)
        logger.info("Task %d %s: ATE %.1f (true %.1f), R2 %s", task.id, name, row["ate"], benchmark.ate,
                    "n/a" if np.isnan(row["r2_cate"]) else f"{row['r2_cate']:.3f}")

    return MetricReport(task=task, rows=pd.DataFrame(rows, columns=RESULT_COLUMNS), bootstrap=boot,
                        strata=strata, estimates=estimates)
