"""Named estimator presets, cross-validated tuning of their nuisance learners, and dispatch."""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from common.errors import ConfigError
from estimation.dml import CONSTANT, DEFAULT_DELTA, estimate_dml
from estimation.ipw import DEFAULT_CLIP, HAJEK, HT, estimate_ipw
from estimation.matching import estimate_matching
from estimation.meta_learners import estimate_s_learner, estimate_t_learner, with_treatment
from estimation.table import adjustment_design
from learners.linear import CLASSIFICATION, REGRESSION
from learners.selection import AUC, DEFAULT_GRIDS, LOGISTIC, R2, RIDGE, LearnerSpec, cross_validate
from learners.trees import BAGGED, BOOSTED

logger = logging.getLogger(__name__)

IPW = "ipw"
MATCHING = "matching"
S_LEARNER = "s_learner"
T_LEARNER = "t_learner"
DML = "dml"
KINDS = (IPW, MATCHING, S_LEARNER, T_LEARNER, DML)

# Learner roles: "propensity" predicts A, "outcome" predicts Y, "final" is the DML last stage.
PRESETS = {
    "ipw_lr": {"kind": IPW, "variant": HT, "propensity": {"family": LOGISTIC}},
    "ipw_rf": {"kind": IPW, "variant": HT, "propensity": {"family": BAGGED}},
    "ipw_w_lr": {"kind": IPW, "variant": HAJEK, "propensity": {"family": LOGISTIC}},
    "ipw_w_rf": {"kind": IPW, "variant": HAJEK, "propensity": {"family": BAGGED}},
    "match_eu": {"kind": MATCHING, "metric": "euclidean"},
    "s_ridge": {"kind": S_LEARNER, "outcome": {"family": RIDGE}, "reports_cate": False},
    "s_rf": {"kind": S_LEARNER, "outcome": {"family": BAGGED}},
    "s_xgb": {"kind": S_LEARNER, "outcome": {"family": BOOSTED}},
    "t_ridge": {"kind": T_LEARNER, "outcome": {"family": RIDGE}},
    "t_rf": {"kind": T_LEARNER, "outcome": {"family": BAGGED}},
    "t_xgb": {"kind": T_LEARNER, "outcome": {"family": BOOSTED}},
    "dml_linear": {"kind": DML, "outcome": {"family": RIDGE}, "propensity": {"family": LOGISTIC},
                   "final": {"family": RIDGE, "alpha": 0.0}},
    "dml_xgb": {"kind": DML, "outcome": {"family": BOOSTED}, "propensity": {"family": BOOSTED},
                "final": {"family": BOOSTED}},
    "dml_mix": {"kind": DML, "outcome": {"family": BOOSTED}, "propensity": {"family": LOGISTIC},
                "final": {"family": RIDGE, "alpha": 0.0}},
}
ROSTER = tuple(PRESETS)
_ROLE_TASKS = {"propensity": CLASSIFICATION, "outcome": REGRESSION, "outcome1": REGRESSION,
               "final": REGRESSION}


@dataclass(frozen=True)
class EstimatorSpec:
    """A configured estimator: kind, learners per role and fixed options."""

    name: str
    kind: str
    learners: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    reports_cate: bool = True
    selection: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"estimator '{self.name}' has unknown kind '{self.kind}'")

    @property
    def tuned(self):
        return bool(self.selection)


def _merge(base, override):
    merged = dict(base)
    for key, value in (override or {}).items():
        if isinstance(merged.get(key), dict) and isinstance(value, dict):
            value = {**merged[key], **value}
        merged[key] = value
    return merged


def build_estimator(name, overrides=None):
    """EstimatorSpec for a preset, with per-preset overrides from the config ``estimators`` section."""
    if name not in PRESETS and not (overrides or {}).get("kind"):
        raise ConfigError(f"unknown estimator '{name}'; known: {', '.join(ROSTER)}")
    entry = _merge(PRESETS.get(name, {}), overrides)
    learners, grids, options = {}, {}, {}
    for key, value in entry.items():
        if key in _ROLE_TASKS:
            if value == CONSTANT:
                options[key] = CONSTANT
                continue
            value = dict(value)
            grid = value.pop("grid", None)
            learners[key] = LearnerSpec.from_dict(value, task=_ROLE_TASKS[key])
            if grid is not None:
                grids[key] = grid
        elif key not in ("kind", "reports_cate"):
            options[key] = value
    return EstimatorSpec(name=name, kind=entry["kind"], learners=learners, grids=grids, options=options,
                         reports_cate=bool(entry.get("reports_cate", entry["kind"] in (S_LEARNER, T_LEARNER, DML))))


def _role_data(spec, role, table, X):
    a, y = table.a, table.y
    if role == "propensity":
        return X, a
    if spec.kind == S_LEARNER:
        return with_treatment(X, a), y
    if spec.kind == T_LEARNER:
        arm = 1 if role == "outcome1" else 0
        return X[a == arm], y[a == arm]
    return X, y


def select_hyperparameters(spec, table, grids=None, k=5, n_samples=20, seed=0, workers=1):
    """Tune every nuisance learner of ``spec`` by k-fold CV on contiguous folds.

    Propensity learners are scored by AUC, outcome learners by R^2; the DML
    final stage keeps its configured parameters. T-learners tune each arm.

    Returns:
        EstimatorSpec with the selected parameters and a ``selection`` record
    """
    learners = dict(spec.learners)
    if spec.kind == T_LEARNER and "outcome" in learners and "outcome1" not in learners:
        learners["outcome1"] = learners["outcome"]
    table.require_both_arms()
    _, X = adjustment_design(table)

    selection = {}
    for role, learner in learners.items():
        if role == "final":
            continue
        grid = (grids or {}).get(role) or spec.grids.get(role) or DEFAULT_GRIDS[learner.family]
        Xr, yr = _role_data(spec, role, table, X)
        result = cross_validate(learner, Xr, yr, grid=grid, k=k, metric=AUC if role == "propensity" else R2,
                                n_samples=n_samples, seed=seed, workers=workers,
                                classes=(0, 1) if role == "propensity" else None)
        learners[role] = learner.with_params(**result.selected)
        selection[role] = {"metric": result.metric, "score": result.best_score, "params": result.selected}
        logger.info("Estimator %s: %s selected %s (CV %s %.4f)", spec.name, role, result.selected,
                    result.metric, result.best_score)
    return replace(spec, learners=learners, selection=selection)


def fit_estimator(spec, table, seed=0):
    """Fit a configured estimator on the table's adjustment columns."""
    opts = spec.options
    L = spec.learners
    if spec.kind == IPW:
        estimate = estimate_ipw(table, L.get("propensity"), variant=opts.get("variant", HAJEK),
                                clip=float(opts.get("clip", DEFAULT_CLIP)), seed=seed, name=spec.name)
    elif spec.kind == MATCHING:
        estimate = estimate_matching(table, metric=opts.get("metric", "euclidean"), name=spec.name)
    elif spec.kind == S_LEARNER:
        estimate = estimate_s_learner(table, L["outcome"], seed=seed, name=spec.name)
    elif spec.kind == T_LEARNER:
        estimate = estimate_t_learner(table, L["outcome"], L.get("outcome1"), seed=seed, name=spec.name)
    else:
        estimate = estimate_dml(table, L["outcome"], L["propensity"], L.get("final", opts.get("final", CONSTANT)),
                                k=int(opts.get("folds", 5)), delta=float(opts.get("delta", DEFAULT_DELTA)),
                                seed=seed, name=spec.name)
    return replace(estimate, diagnostics={**estimate.diagnostics, **cv_summary(spec)})


def cv_summary(spec):
    """The CV score column: propensity AUC when tuned, else the mean outcome R^2."""
    if not spec.selection:
        return {"cv_metric": "", "cv_score": float("nan")}
    if "propensity" in spec.selection and spec.kind == IPW:
        entry = spec.selection["propensity"]
        return {"cv_metric": entry["metric"], "cv_score": entry["score"], "selection": spec.selection}
    outcome = [v["score"] for k, v in spec.selection.items() if k.startswith("outcome")]
    return {"cv_metric": R2, "cv_score": float(np.mean(outcome)) if outcome else float("nan"),
            "selection": spec.selection}


def run_estimator(name, table, tune=True, overrides=None, k=5, n_samples=20, seed=0, workers=1, clip=None):
    """Build a preset, optionally tune it, and fit it.

    Returns:
        (EffectEstimate, EstimatorSpec)
    """
    spec = build_estimator(name, overrides)
    if clip is not None and spec.kind == IPW and "clip" not in spec.options:
        spec = replace(spec, options={**spec.options, "clip": clip})
    if tune and spec.learners:
        spec = select_hyperparameters(spec, table, k=k, n_samples=n_samples, seed=seed, workers=workers)
    return fit_estimator(spec, table, seed=seed), spec
