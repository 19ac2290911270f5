"""Hand-crafted transition mechanisms for t > 1.

The ``transition_*`` functions are vectorized and pure: they map previous
values, current-time inputs and uniform/normal variates to new values. Rule
classes bind config parameters and the variable's initial-state sampler, read
their inputs from the simulation state, and call these functions.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from common.errors import ConfigError
from ingestion.schema import (
    DAY_COURSE,
    EDUCATION_LEVELS,
    EVENING_COURSE,
    FULL_TIME,
    NO_STUDIES,
    STUDIES_LEVELS,
    WITHOUT_PAY,
)
from simulator.samplers import education_level, gumbel_max_sample

logger = logging.getLogger(__name__)

MAX_EDUCATION_LEVEL = len(EDUCATION_LEVELS)
HOURS_RANGE = (0.0, 7.0 * 24.0)
MARRIED = "Married"
NEVER_MARRIED = "Never-married"


def _probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


# Pure mechanisms

def transition_deterministic(variable, prev):
    prev = np.asarray(prev)
    if variable == "age":
        return prev + 1
    return prev.copy()


def transition_education(level_prev, studies_prev, u, advance_prob):
    """Advance the education level by one with a probability set by last year's studies."""
    p = np.array([advance_prob.get(s, 0.0) for s in np.asarray(studies_prev)], dtype=float)
    level = np.asarray(level_prev, dtype=np.int64) + (u < p)
    return np.minimum(level, MAX_EDUCATION_LEVEL)


def transition_stay_or_redraw(prev, redraw, u, p_stay):
    return np.where(u < p_stay, np.asarray(prev, dtype=object), np.asarray(redraw, dtype=object))


def transition_marital(prev, u, probabilities, categories):
    """Inverse-CDF draw from per-subject rows of transition probabilities over ``categories``."""
    cum = np.cumsum(probabilities, axis=1)
    cum = cum / cum[:, -1:]
    idx = (u[:, None] > cum).sum(axis=1)
    return np.asarray(categories, dtype=object)[np.minimum(idx, len(categories) - 1)]


def transition_hours(prev, fresh, alpha, bounds=HOURS_RANGE):
    return np.clip(alpha * np.asarray(prev, dtype=float) + (1.0 - alpha) * np.asarray(fresh, dtype=float), *bounds)


def transition_capital(prev, gate_u, p_nonzero_fresh, keep_u, perturbation, fresh, p_persist, p_keep, scale):
    """Capital-net: persistence of having capital, then keep-with-noise or a fresh magnitude.

    Args:
        prev: Last year's capital-net
        gate_u: Uniform deciding whether capital is nonzero
        p_nonzero_fresh: Initial-model probability of nonzero capital
        keep_u: Uniform deciding between a perturbed keep and a fresh draw
        perturbation: Standard normal multiplying ``scale``
        fresh: Fresh magnitude draws from the initial model
        p_persist: Probability of nonzero capital when last year's was nonzero
        p_keep: Probability of keeping a perturbed prior value
        scale: Relative perturbation scale
    """
    prev = np.asarray(prev, dtype=float)
    had = prev != 0
    p_nonzero = np.where(had, p_persist, p_nonzero_fresh)
    nonzero = gate_u < p_nonzero
    kept = prev * (1.0 + scale * perturbation)
    value = np.where(had & (keep_u < p_keep), kept, fresh)
    return np.where(nonzero, value, 0.0)


def transition_studies(logits, gumbel, mask, classes=None):
    classes = classes or STUDIES_LEVELS
    return np.asarray(classes, dtype=object)[gumbel_max_sample(logits, gumbel, mask)]


def transition_income(prev, resample, fresh, u_raise, raise_low, raise_high, bonus):
    """Previous income with a random raise, or a fresh draw where ``resample`` holds."""
    raised = np.asarray(prev, dtype=float) * (1.0 + raise_low + (raise_high - raise_low) * u_raise + bonus)
    return np.where(resample, fresh, raised)


# Rules bound to a simulator

@dataclass
class TransitionRule:
    variable: str
    params: dict = field(default_factory=dict)
    sampler: object = None
    kind: str = ""

    def step(self, prev, curr, noise):
        raise NotImplementedError

    @property
    def redraw_inputs(self):
        """Same-time variables read from the initial-state sampler."""
        return tuple(getattr(self.sampler, "parents", ()))

    def to_state(self):
        return {"kind": self.kind, "variable": self.variable, "params": self.params}


@dataclass
class AgeTransition(TransitionRule):
    kind: str = "AgeTransition"

    def step(self, prev, curr, noise):
        return transition_deterministic("age", prev[self.variable])

    @property
    def redraw_inputs(self):
        return ()


@dataclass
class ConstantTransition(TransitionRule):
    kind: str = "ConstantTransition"

    def step(self, prev, curr, noise):
        return transition_deterministic(self.variable, prev[self.variable])

    @property
    def redraw_inputs(self):
        return ()


@dataclass
class EducationTransition(TransitionRule):
    kind: str = "EducationTransition"

    def __post_init__(self):
        defaults = {FULL_TIME: 0.95, EVENING_COURSE: 0.05, DAY_COURSE: 0.1, NO_STUDIES: 0.0}
        probs = {**defaults, **(self.params.get("advance_prob") or {})}
        self.advance_prob = {k: _probability(f"advance_prob[{k}]", v) for k, v in probs.items()}

    @property
    def redraw_inputs(self):
        return ()

    def step(self, prev, curr, noise):
        level = transition_education(
            education_level(prev["education"]), prev["studies"], noise.stay, self.advance_prob
        )
        return np.asarray(EDUCATION_LEVELS, dtype=object)[level - 1]


@dataclass
class StayOrRedrawTransition(TransitionRule):
    """Keep last year's value with probability p_stay, else redraw from the initial model.

    ``forced_redraw`` lists previous values that always redraw; ``studies_factor``
    scales p_stay by last year's studies.
    """

    kind: str = "StayOrRedrawTransition"

    def __post_init__(self):
        self.p_stay = _probability("p_stay", self.params.get("p_stay", 0.95))
        self.forced_redraw = tuple(self.params.get("forced_redraw", ()))
        self.studies_factor = {k: _probability(f"studies_factor[{k}]", v)
                               for k, v in (self.params.get("studies_factor") or {}).items()}

    def effective_stay(self, prev):
        p = np.full(len(prev[self.variable]), self.p_stay)
        if self.studies_factor:
            factor = np.array([self.studies_factor.get(s, 1.0) for s in np.asarray(prev["studies"])])
            p = p * factor
        if self.forced_redraw:
            p = np.where(np.isin(np.asarray(prev[self.variable]), self.forced_redraw), 0.0, p)
        return p

    def step(self, prev, curr, noise):
        redraw = self.sampler.sample(curr, noise)
        return transition_stay_or_redraw(prev[self.variable], redraw, noise.stay, self.effective_stay(prev))


@dataclass
class WorkclassTransition(StayOrRedrawTransition):
    kind: str = "WorkclassTransition"

    def __post_init__(self):
        self.params = {"forced_redraw": [WITHOUT_PAY], **self.params}
        super().__post_init__()


@dataclass
class OccupationTransition(StayOrRedrawTransition):
    kind: str = "OccupationTransition"

    def __post_init__(self):
        self.params = {"studies_factor": {FULL_TIME: 0.25}, **self.params}
        super().__post_init__()


@dataclass
class RelationshipTransition(StayOrRedrawTransition):
    kind: str = "RelationshipTransition"


DEFAULT_MARITAL_MATRIX = {
    NEVER_MARRIED: {NEVER_MARRIED: 0.88, MARRIED: 0.12},
    MARRIED: {MARRIED: 0.95, "Divorced": 0.03, "Separated": 0.01, "Widowed": 0.01},
    "Divorced": {"Divorced": 0.90, MARRIED: 0.10},
    "Separated": {"Separated": 0.60, "Divorced": 0.30, MARRIED: 0.10},
    "Widowed": {"Widowed": 0.95, MARRIED: 0.05},
}
DEFAULT_AGE_BANDS = [[0, 25, 0.6], [25, 45, 1.0], [45, 200, 0.5]]


@dataclass
class MaritalTransition(TransitionRule):
    """Row-stochastic matrix over marital states with age and study modulation.

    Transitions into Married from any other state are scaled by an age-band
    multiplier and by ``full_time_marriage_factor`` under last year's full-time
    studies; removed mass stays on the diagonal.
    """

    kind: str = "MaritalTransition"

    def __post_init__(self):
        matrix = self.params.get("matrix") or DEFAULT_MARITAL_MATRIX
        self.categories = tuple(matrix)
        self.matrix = np.zeros((len(self.categories), len(self.categories)))
        for i, src in enumerate(self.categories):
            row = matrix[src] or {}
            for dst, p in row.items():
                if dst not in self.categories:
                    raise ConfigError(f"marital matrix row '{src}' names unknown state '{dst}'")
                self.matrix[i, self.categories.index(dst)] = _probability(f"matrix[{src}][{dst}]", p)
            if abs(self.matrix[i].sum() - 1.0) > 1e-9:
                raise ConfigError(f"marital matrix row '{src}' sums to {self.matrix[i].sum():.6f}, not 1")
        self.age_bands = [tuple(b) for b in self.params.get("age_bands", DEFAULT_AGE_BANDS)]
        self.full_time_factor = _probability("full_time_marriage_factor",
                                             self.params.get("full_time_marriage_factor", 0.5))

    @property
    def redraw_inputs(self):
        return ()

    def probabilities(self, prev_status, age, studies_prev):
        codes = np.array([self.categories.index(s) for s in np.asarray(prev_status)])
        probs = self.matrix[codes].copy()
        if MARRIED not in self.categories:
            return probs
        m = self.categories.index(MARRIED)
        multiplier = np.ones(len(codes))
        age = np.asarray(age, dtype=float)
        for lo, hi, factor in self.age_bands:
            multiplier = np.where((age >= lo) & (age < hi), factor, multiplier)
        multiplier = np.where(np.asarray(studies_prev) == FULL_TIME, multiplier * self.full_time_factor, multiplier)
        unmarried = codes != m
        reduced = probs[:, m] * np.minimum(multiplier, 1.0)
        rows = np.flatnonzero(unmarried)
        probs[rows, codes[rows]] += probs[rows, m] - reduced[rows]
        probs[rows, m] = reduced[rows]
        return probs

    def step(self, prev, curr, noise):
        probs = self.probabilities(prev[self.variable], curr["age"], prev["studies"])
        return transition_marital(prev[self.variable], noise.stay, probs, self.categories)

    def to_state(self):
        state = super().to_state()
        state["params"] = {**self.params, "matrix": {
            src: {dst: float(self.matrix[i, j]) for j, dst in enumerate(self.categories) if self.matrix[i, j] > 0}
            for i, src in enumerate(self.categories)
        }}
        return state


@dataclass
class HoursTransition(TransitionRule):
    kind: str = "HoursTransition"

    def __post_init__(self):
        self.alpha = _probability("alpha", self.params.get("alpha", 0.9))

    def step(self, prev, curr, noise):
        fresh = self.sampler.sample(curr, noise)
        return transition_hours(prev[self.variable], fresh, self.alpha)


@dataclass
class CapitalTransition(TransitionRule):
    kind: str = "CapitalTransition"

    def __post_init__(self):
        self.p_persist = _probability("p_nonzero_if_prev_nonzero", self.params.get("p_nonzero_if_prev_nonzero", 0.8))
        self.p_keep = _probability("p_keep", self.params.get("p_keep", 0.9))
        self.scale = float(self.params.get("perturbation_scale", 0.1))
        if self.scale < 0:
            raise ConfigError("perturbation_scale must be non-negative")

    def step(self, prev, curr, noise):
        n = noise.n
        return transition_capital(
            prev[self.variable],
            noise.gate,
            self.sampler.nonzero_probability(curr, n),
            noise.aux,
            noise.normal_aux,
            self.sampler.magnitude.sample(curr, noise),
            self.p_persist,
            self.p_keep,
            self.scale,
        )


@dataclass
class StudiesTransition(TransitionRule):
    """Initial studies logits plus continuation, persistence and start penalties.

    A full-time student whose education level is not a program end keeps a
    ``continue_bonus`` on full-time studies. Course takers keep
    ``course_persistence`` on their course. Starting full-time studies costs
    ``start_penalty`` and a further ``high_income_penalty`` above the income
    threshold. Full-time studies stay masked for the sampler's blocked levels.
    """

    kind: str = "StudiesTransition"

    def __post_init__(self):
        p = self.params
        self.continue_bonus = float(p.get("continue_bonus", 4.0))
        self.course_persistence = float(p.get("course_persistence", 2.0))
        self.start_penalty = float(p.get("start_penalty", 1.0))
        self.high_income_penalty = float(p.get("high_income_penalty", 1.5))
        self.high_income_threshold = float(p.get("high_income_threshold", 50000.0))
        self.program_end_levels = tuple(int(v) for v in p.get("program_end_levels", (9, 13, 14, 15, 16)))

    @property
    def redraw_inputs(self):
        return tuple(self.sampler.parents)

    def adjustment(self, prev, curr):
        classes = self.sampler.classes
        stu_prev = np.asarray(prev["studies"])
        inc_prev = np.asarray(prev["income"], dtype=float)
        level = education_level(curr["education"])
        adj = np.zeros((len(stu_prev), len(classes)))
        ft = classes.index(FULL_TIME)

        continuing = (stu_prev == FULL_TIME) & ~np.isin(level, self.program_end_levels)
        adj[:, ft] += np.where(continuing, self.continue_bonus, 0.0)
        starting = stu_prev != FULL_TIME
        adj[:, ft] -= np.where(starting, self.start_penalty, 0.0)
        adj[:, ft] -= np.where(starting & (inc_prev > self.high_income_threshold), self.high_income_penalty, 0.0)
        for course in (DAY_COURSE, EVENING_COURSE):
            k = classes.index(course)
            adj[:, k] += np.where(stu_prev == course, self.course_persistence, 0.0)
        return adj

    def logits(self, prev, curr, n):
        return self.sampler.logits(curr, n) + self.adjustment(prev, curr)

    def step(self, prev, curr, noise):
        n = noise.n
        return transition_studies(
            self.logits(prev, curr, n),
            noise.gumbel(len(self.sampler.classes)),
            self.sampler.full_time_mask(curr, n),
            self.sampler.classes,
        )


@dataclass
class IncomeTransition(TransitionRule):
    """Raise last year's income or resample it from the initial income model.

    Resampling happens when full-time studies just ended (with a post-study
    bonus on the base income), when last year's workclass meant no paid job,
    or when last year's income was below ``low_income_threshold``. Current
    studies and workclass overrides apply last.
    """

    kind: str = "IncomeTransition"

    def __post_init__(self):
        p = self.params
        self.low_income_threshold = float(p.get("low_income_threshold", 5000.0))
        self.raise_low = float(p.get("raise_low", 0.0))
        self.raise_high = float(p.get("raise_high", 0.06))
        self.course_bonus = float(p.get("course_bonus", 0.04))
        self.post_study_bonus = float(p.get("post_study_bonus", 0.10))
        self.no_job_workclasses = tuple(p.get("no_job_workclasses", (WITHOUT_PAY, "Never-worked")))
        if self.raise_high < self.raise_low:
            raise ConfigError("raise_high must be at least raise_low")

    @property
    def redraw_inputs(self):
        return tuple(self.sampler.parents)

    def step(self, prev, curr, noise):
        sampler = self.sampler
        stu_prev, stu_curr = np.asarray(prev["studies"]), np.asarray(curr["studies"])
        inc_prev = np.asarray(prev[self.variable], dtype=float)

        finished = (stu_prev == FULL_TIME) & (stu_curr != FULL_TIME)
        no_job = np.isin(np.asarray(prev["workclass"]), self.no_job_workclasses)
        resample = finished | no_job | (inc_prev < self.low_income_threshold)

        fresh = sampler.draw(curr, noise, multiplier=np.where(finished, 1.0 + self.post_study_bonus, 1.0))
        bonus = np.where(np.isin(stu_prev, (EVENING_COURSE, DAY_COURSE)), self.course_bonus, 0.0)
        # last year's day-course reduction is undone before raising
        day_prev = np.where(stu_prev == DAY_COURSE, sampler.day_factor, 1.0)
        day_now = np.where(stu_curr == DAY_COURSE, sampler.day_factor, 1.0)
        income = transition_income(inc_prev / day_prev, resample, fresh, noise.aux,
                                   self.raise_low, self.raise_high, bonus) * day_now
        return sampler.apply_overrides(income, stu_curr, curr["workclass"])


RULES = {
    cls.kind: cls
    for cls in (AgeTransition, ConstantTransition, EducationTransition, WorkclassTransition,
                OccupationTransition, RelationshipTransition, StayOrRedrawTransition,
                MaritalTransition, HoursTransition, CapitalTransition, StudiesTransition,
                IncomeTransition)
}
