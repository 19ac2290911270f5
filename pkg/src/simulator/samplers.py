"""Initial-state structural equations.

Data-backed samplers wrap a fitted learner and add exogenous noise: categorical
variables are drawn with the Gumbel-max trick over the learner's logits,
continuous variables get additive Gaussian noise scaled to the training RMSE,
and zero-inflated variables blend a nonzero gate with a magnitude model.
Studies and income have hand-designed initial mechanisms.

Samplers are pure given their inputs: ``sample(state, noise)`` reads parent
columns from ``state`` (variable name -> array) and draws from ``noise`` only.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
import pandas as pd
from sklearn.metrics import r2_score, roc_auc_score

from common.errors import ConfigError, DataError, NumericError
from ingestion.schema import (
    DAY_COURSE,
    EDUCATION_LEVELS,
    FULL_TIME,
    STUDIES_LEVELS,
    WITHOUT_PAY,
)
from learners.encoder import FeatureEncoder
from learners.linear import CLASSIFICATION, REGRESSION
from learners.selection import AUC, LearnerSpec, fit_learner, model_from_state, score_model

logger = logging.getLogger(__name__)

CATEGORICAL_SAMPLER = "categorical"
CONTINUOUS_SAMPLER = "continuous"
ZERO_INFLATED_SAMPLER = "zero_inflated"
EMPIRICAL_SAMPLER = "empirical"
STUDIES_SAMPLER = "studies"
INCOME_SAMPLER = "income"

STUDIES_TERMS = ("intercept", "age", "education")


def gumbel_max_sample(logits, gumbel, mask=None):
    """Index of argmax(logits + gumbel), restricted to classes where mask is True.

    Works row-wise on (n, k) arrays or on a single (k,) vector.
    """
    logits = np.asarray(logits, dtype=float)
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits passed to the Gumbel-max sampler")
    if logits.shape[-1] < 2:
        raise NumericError("Gumbel-max sampling needs at least 2 classes")
    scores = logits + np.asarray(gumbel, dtype=float)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
        if not mask.any(axis=-1).all():
            raise NumericError("every class is masked for some subject")
        scores = np.where(mask, scores, -np.inf)
    return scores.argmax(axis=-1)


def education_level(labels):
    """education-num code (1..16) of education labels."""
    codes = pd.Categorical(np.asarray(labels), categories=list(EDUCATION_LEVELS)).codes
    if (codes < 0).any():
        raise DataError(f"unknown education label {np.asarray(labels)[codes < 0][0]!r}")
    return codes.astype(np.int64) + 1


def _inputs(parents, state, n):
    return pd.DataFrame({p: np.asarray(state[p]) for p in parents}, index=pd.RangeIndex(n))


def _pack(prefix, model, arrays):
    meta, model_arrays = model.to_state()
    arrays.update({f"{prefix}.{k}": v for k, v in model_arrays.items()})
    return meta


def _unpack(prefix, meta, arrays):
    head = f"{prefix}."
    return model_from_state(meta, {k[len(head):]: v for k, v in arrays.items() if k.startswith(head)})


@dataclass
class CategoricalSampler:
    variable: str
    parents: tuple
    encoder: FeatureEncoder
    model: object
    diagnostics: dict = field(default_factory=dict)
    kind: str = CATEGORICAL_SAMPLER

    @property
    def classes(self):
        return tuple(self.model.classes)

    def logits(self, state, n):
        return self.model.decision_function(self.encoder.transform(_inputs(self.parents, state, n)))

    def probabilities(self, state, n):
        return self.model.predict_proba(self.encoder.transform(_inputs(self.parents, state, n)))

    def sample(self, state, noise):
        idx = gumbel_max_sample(self.logits(state, noise.n), noise.gumbel(len(self.classes)))
        return np.asarray(self.classes, dtype=object)[idx]

    def to_state(self):
        arrays = {}
        meta = {"kind": self.kind, "variable": self.variable, "parents": list(self.parents),
                "encoder": self.encoder.to_dict(), "model": _pack("model", self.model, arrays),
                "diagnostics": self.diagnostics}
        return meta, arrays


@dataclass
class ContinuousSampler:
    variable: str
    parents: tuple
    encoder: FeatureEncoder
    model: object
    noise_scale: float
    lower: float = None
    upper: float = None
    diagnostics: dict = field(default_factory=dict)
    kind: str = CONTINUOUS_SAMPLER

    def mean(self, state, n):
        return self.model.predict(self.encoder.transform(_inputs(self.parents, state, n)))

    def sample(self, state, noise):
        values = self.mean(state, noise.n) + self.noise_scale * noise.normal
        if self.lower is not None or self.upper is not None:
            values = np.clip(values, self.lower, self.upper)
        return values

    def to_state(self):
        arrays = {}
        meta = {"kind": self.kind, "variable": self.variable, "parents": list(self.parents),
                "encoder": self.encoder.to_dict(), "model": _pack("model", self.model, arrays),
                "noise_scale": self.noise_scale, "lower": self.lower, "upper": self.upper,
                "diagnostics": self.diagnostics}
        return meta, arrays


@dataclass
class ZeroInflatedSampler:
    variable: str
    parents: tuple
    encoder: FeatureEncoder
    gate: object
    magnitude: ContinuousSampler
    diagnostics: dict = field(default_factory=dict)
    kind: str = ZERO_INFLATED_SAMPLER

    def nonzero_probability(self, state, n):
        proba = self.gate.predict_proba(self.encoder.transform(_inputs(self.parents, state, n)))
        return proba[:, list(self.gate.classes).index(1)]

    def sample(self, state, noise):
        nonzero = noise.gate < self.nonzero_probability(state, noise.n)
        return np.where(nonzero, self.magnitude.sample(state, noise), 0.0)

    def to_state(self):
        arrays = {}
        magnitude_meta, magnitude_arrays = self.magnitude.to_state()
        arrays.update({f"magnitude.{k}": v for k, v in magnitude_arrays.items()})
        meta = {"kind": self.kind, "variable": self.variable, "parents": list(self.parents),
                "encoder": self.encoder.to_dict(), "gate": _pack("gate", self.gate, arrays),
                "magnitude": magnitude_meta, "diagnostics": self.diagnostics}
        return meta, arrays


@dataclass
class EmpiricalSampler:
    """Inverse empirical CDF of a parentless continuous variable."""

    variable: str
    values: np.ndarray
    parents: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    kind: str = EMPIRICAL_SAMPLER

    def sample(self, state, noise):
        idx = np.minimum((noise.aux * len(self.values)).astype(np.int64), len(self.values) - 1)
        return self.values[idx]

    def to_state(self):
        meta = {"kind": self.kind, "variable": self.variable, "parents": [],
                "diagnostics": self.diagnostics}
        return meta, {"values": self.values}


@dataclass
class StudiesInitialSampler:
    """Hand-set multinomial logit over the four study types.

    Per class: an intercept, slopes on standardized age and education-num, and
    optional offsets per relationship and sex category.
    """

    variable: str
    parents: tuple
    coefficients: dict
    age_center: float = 38.0
    age_scale: float = 10.0
    education_center: float = 10.0
    education_scale: float = 3.0
    no_full_time_levels: tuple = ("Doctorate",)
    classes: tuple = STUDIES_LEVELS
    diagnostics: dict = field(default_factory=dict)
    kind: str = STUDIES_SAMPLER

    def __post_init__(self):
        for label in self.classes:
            entry = self.coefficients.get(label)
            if entry is None:
                raise ConfigError(f"studies coefficient table lacks an entry for '{label}'")
            for term in STUDIES_TERMS:
                if term not in entry:
                    raise ConfigError(f"studies coefficient entry '{label}' lacks '{term}'")

    def logits(self, state, n):
        age = (np.asarray(state["age"], dtype=float) - self.age_center) / self.age_scale
        edu = (education_level(state["education"]) - self.education_center) / self.education_scale
        out = np.zeros((n, len(self.classes)))
        for k, label in enumerate(self.classes):
            entry = self.coefficients[label]
            out[:, k] = entry["intercept"] + entry["age"] * age + entry["education"] * edu
            for parent in ("relationship", "sex"):
                offsets = entry.get(parent) or {}
                if offsets and parent in state:
                    out[:, k] += pd.Series(np.asarray(state[parent])).map(offsets).fillna(0.0).to_numpy()
        return out

    def full_time_mask(self, state, n):
        mask = np.ones((n, len(self.classes)), dtype=bool)
        blocked = np.isin(np.asarray(state["education"]), self.no_full_time_levels)
        mask[blocked, self.classes.index(FULL_TIME)] = False
        return mask

    def sample(self, state, noise, adjustment=None):
        logits = self.logits(state, noise.n)
        if adjustment is not None:
            logits = logits + adjustment
        idx = gumbel_max_sample(logits, noise.gumbel(len(self.classes)), self.full_time_mask(state, noise.n))
        return np.asarray(self.classes, dtype=object)[idx]

    def to_state(self):
        meta = {"kind": self.kind, "variable": self.variable, "parents": list(self.parents),
                "coefficients": self.coefficients, "age_center": self.age_center,
                "age_scale": self.age_scale, "education_center": self.education_center,
                "education_scale": self.education_scale,
                "no_full_time_levels": list(self.no_full_time_levels),
                "classes": list(self.classes), "diagnostics": self.diagnostics}
        return meta, {}


@dataclass
class IncomeInitialSampler:
    """Continuous income built from a binary-income score.

    base = shift + scale * h(x), where h predicts P(income > 50K) from the
    covariate parents. The drawn income is max(0, m * base + noise_std * e),
    with m = day_factor under a day course, then forced to 0 under full-time
    studies or an unpaid workclass.
    """

    variable: str
    parents: tuple
    encoder: FeatureEncoder
    model: object
    shift: float = 0.0
    scale: float = 1.0
    noise_std: float = 10000.0
    day_factor: float = 0.8
    zero_workclasses: tuple = (WITHOUT_PAY,)
    diagnostics: dict = field(default_factory=dict)
    kind: str = INCOME_SAMPLER

    @property
    def score_parents(self):
        return tuple(v.name for v in self.encoder.schema)

    def score(self, state, n):
        return self.model.predict(self.encoder.transform(_inputs(self.score_parents, state, n)))

    def base_income(self, state, n):
        return self.shift + self.scale * self.score(state, n)

    def draw(self, state, noise, multiplier=1.0):
        """Income before the studies and workclass overrides."""
        return np.maximum(0.0, multiplier * self.base_income(state, noise.n) + self.noise_std * noise.normal)

    def apply_overrides(self, values, studies, workclass):
        zero = (np.asarray(studies) == FULL_TIME) | np.isin(np.asarray(workclass), self.zero_workclasses)
        return np.where(zero, 0.0, values)

    def sample(self, state, noise):
        studies = np.asarray(state["studies"])
        multiplier = np.where(studies == DAY_COURSE, self.day_factor, 1.0)
        return self.apply_overrides(self.draw(state, noise, multiplier), studies, state["workclass"])

    def calibrate(self, scores, target_mean=70000.0, target_share=0.423, threshold=50000.0, scale=None):
        """Solve (shift, scale) on a cohort of scores.

        The mean of shift + scale * h matches target_mean; the scale is chosen
        so the share above threshold approximates target_share, unless given.
        Falls back to a pure rescaling (shift 0) when no positive scale fits.
        """
        if target_mean <= 0:
            raise ConfigError(f"income calibration target must be positive, got {target_mean}")
        scores = np.asarray(scores, dtype=float)
        mean_score = float(scores.mean())
        if scale is None:
            pivot = float(np.quantile(scores, 1.0 - target_share))
            if mean_score - pivot > 1e-12:
                scale = (target_mean - threshold) / (mean_score - pivot)
            elif mean_score > 0:
                logger.warning("income calibration cannot hit the >50K share; using shift 0")
                return replace(self, shift=0.0, scale=target_mean / mean_score)
            else:
                raise NumericError("income scores have non-positive mean; cannot calibrate")
        shift = target_mean - scale * mean_score
        return replace(self, shift=float(shift), scale=float(scale))

    def to_state(self):
        arrays = {}
        meta = {"kind": self.kind, "variable": self.variable, "parents": list(self.parents),
                "encoder": self.encoder.to_dict(), "model": _pack("model", self.model, arrays),
                "shift": self.shift, "scale": self.scale, "noise_std": self.noise_std,
                "day_factor": self.day_factor, "zero_workclasses": list(self.zero_workclasses),
                "diagnostics": self.diagnostics}
        return meta, arrays


def _design(dataset, parents):
    variables = [dataset.variables[p] for p in parents]
    encoder = FeatureEncoder.fit(dataset.frame, variables)
    return encoder, encoder.transform(dataset.frame)


def _check_learner(learner, task):
    if isinstance(learner, dict):
        learner = LearnerSpec.from_dict(learner, task=task)
    if learner.task != task:
        learner = LearnerSpec(learner.family, task, learner.params)
    return learner


def fit_categorical_sampler(dataset, child, parents, learner, seed=0):
    """Fit a categorical structural equation; diagnostics carry the held-in macro AUC."""
    learner = _check_learner(learner, CLASSIFICATION)
    encoder, X = _design(dataset, parents)
    y = dataset.frame[child].to_numpy()
    classes = dataset.variables[child].categories
    model = fit_learner(learner, X, y, classes=classes, seed=seed)
    auc = score_model(model, X, y, AUC)
    logger.info("Fitted %s sampler for %s: AUC %.3f", learner.family, child, auc)
    return CategoricalSampler(child, tuple(parents), encoder, model,
                              diagnostics={"metric": "auc", "value": auc, "n": len(y)})


def fit_continuous_sampler(dataset, child, parents, learner, noise_coef=1.0, lower=None, upper=None, seed=0):
    """Additive-noise structural equation with noise scale noise_coef * training RMSE."""
    if noise_coef < 0:
        raise ConfigError(f"noise coefficient must be non-negative, got {noise_coef}")
    learner = _check_learner(learner, REGRESSION)
    encoder, X = _design(dataset, parents)
    y = dataset.frame[child].to_numpy(dtype=float)
    model = fit_learner(learner, X, y, seed=seed)
    fitted = model.predict(X)
    rmse = float(np.sqrt(np.mean((y - fitted) ** 2)))
    r2 = float(r2_score(y, fitted)) if len(y) > 1 else float("nan")
    logger.info("Fitted %s sampler for %s: R2 %.3f, RMSE %.3f", learner.family, child, r2, rmse)
    return ContinuousSampler(child, tuple(parents), encoder, model, noise_scale=noise_coef * rmse,
                             lower=lower, upper=upper,
                             diagnostics={"metric": "r2", "value": r2, "n": len(y)})


def fit_zero_inflated_sampler(dataset, child, parents, gate_learner, magnitude_learner, noise_coef=1.0, seed=0):
    """Gate on 1[child != 0] plus a magnitude model fit on the nonzero rows only."""
    y = dataset.frame[child].to_numpy(dtype=float)
    nonzero = y != 0
    if not nonzero.any():
        raise DataError(f"no nonzero rows for zero-inflated variable '{child}'")

    gate_learner = _check_learner(gate_learner, CLASSIFICATION)
    encoder, X = _design(dataset, parents)
    gate = fit_learner(gate_learner, X, nonzero.astype(int), classes=(0, 1), seed=seed)

    subset = _Subset(dataset.frame.loc[nonzero].reset_index(drop=True), dataset.variables)
    magnitude = fit_continuous_sampler(subset, child, parents, magnitude_learner, noise_coef, seed=seed)
    gate_auc = score_model(gate, X, nonzero.astype(int), AUC)
    diagnostics = {"metric": "r2", "value": magnitude.diagnostics["value"], "n": int(nonzero.sum()),
                   "gate_auc": gate_auc, "nonzero_only": True}
    return ZeroInflatedSampler(child, tuple(parents), encoder, gate, magnitude, diagnostics=diagnostics)


def fit_empirical_sampler(dataset, child):
    values = np.sort(dataset.frame[child].to_numpy(dtype=float))
    if len(values) == 0:
        raise DataError(f"no values to build an empirical sampler for '{child}'")
    return EmpiricalSampler(child, values, diagnostics={"metric": "", "value": float("nan"), "n": len(values)})


def build_studies_sampler(parents, table):
    """Studies initial sampler from the config coefficient table."""
    table = dict(table or {})
    coefficients = table.get("coefficients")
    if not coefficients:
        raise ConfigError("studies section lacks a 'coefficients' table")
    return StudiesInitialSampler(
        variable="studies",
        parents=tuple(parents),
        coefficients={k: dict(v) for k, v in coefficients.items()},
        age_center=float(table.get("age_center", 38.0)),
        age_scale=float(table.get("age_scale", 10.0)),
        education_center=float(table.get("education_center", 10.0)),
        education_scale=float(table.get("education_scale", 3.0)),
        no_full_time_levels=tuple(table.get("no_full_time_levels", ("Doctorate",))),
        diagnostics={"metric": "", "value": float("nan"), "n": 0},
    )


def fit_income_sampler(dataset, child, parents, learner, noise_std=10000.0, day_factor=0.8,
                       zero_workclasses=(WITHOUT_PAY,), seed=0):
    """Fit the binary-income score h on the covariate parents (studies excluded).

    The returned sampler is uncalibrated (shift 0, scale 1); see calibrate().
    """
    learner = _check_learner(learner, REGRESSION)
    score_parents = [p for p in parents if p != "studies" and p in dataset.frame.columns]
    encoder, X = _design(dataset, score_parents)
    label = dataset.frame[child].to_numpy(dtype=float)
    model = fit_learner(learner, X, label, seed=seed)
    scores = model.predict(X)
    try:
        auc = float(roc_auc_score(label, scores))
    except ValueError:
        auc = float("nan")
    logger.info("Fitted income score for %s: AUC %.3f against the >50K label", child, auc)
    return IncomeInitialSampler(child, tuple(parents), encoder, model, noise_std=float(noise_std),
                                day_factor=float(day_factor), zero_workclasses=tuple(zero_workclasses),
                                diagnostics={"metric": "auc", "value": auc, "n": len(label)})


@dataclass(frozen=True)
class _Subset:
    frame: pd.DataFrame
    variables: dict


def sampler_from_state(meta, arrays):
    kind = meta["kind"]
    parents = tuple(meta["parents"])
    diagnostics = meta.get("diagnostics", {})
    if kind == EMPIRICAL_SAMPLER:
        return EmpiricalSampler(meta["variable"], arrays["values"], diagnostics=diagnostics)
    if kind == STUDIES_SAMPLER:
        return StudiesInitialSampler(
            variable=meta["variable"], parents=parents, coefficients=meta["coefficients"],
            age_center=meta["age_center"], age_scale=meta["age_scale"],
            education_center=meta["education_center"], education_scale=meta["education_scale"],
            no_full_time_levels=tuple(meta["no_full_time_levels"]), classes=tuple(meta["classes"]),
            diagnostics=diagnostics,
        )

    encoder = FeatureEncoder.from_dict(meta["encoder"])
    if kind == CATEGORICAL_SAMPLER:
        return CategoricalSampler(meta["variable"], parents, encoder,
                                  _unpack("model", meta["model"], arrays), diagnostics=diagnostics)
    if kind == CONTINUOUS_SAMPLER:
        return ContinuousSampler(meta["variable"], parents, encoder, _unpack("model", meta["model"], arrays),
                                 noise_scale=meta["noise_scale"], lower=meta["lower"], upper=meta["upper"],
                                 diagnostics=diagnostics)
    if kind == ZERO_INFLATED_SAMPLER:
        head = "magnitude."
        magnitude = sampler_from_state(
            meta["magnitude"], {k[len(head):]: v for k, v in arrays.items() if k.startswith(head)}
        )
        return ZeroInflatedSampler(meta["variable"], parents, encoder, _unpack("gate", meta["gate"], arrays),
                                   magnitude, diagnostics=diagnostics)
    if kind == INCOME_SAMPLER:
        return IncomeInitialSampler(
            meta["variable"], parents, encoder, _unpack("model", meta["model"], arrays),
            shift=meta["shift"], scale=meta["scale"], noise_std=meta["noise_std"],
            day_factor=meta["day_factor"], zero_workclasses=tuple(meta["zero_workclasses"]),
            diagnostics=diagnostics,
        )
    raise DataError(f"unknown sampler kind '{kind}' in stored state")
