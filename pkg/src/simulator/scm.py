"""Fitted sequential SCM: fitting, ancestral simulation and counterfactual benchmarks.

t=1 values come from the initial-state samplers in initial-layer topological
order; later steps apply the transition rules in transition-layer order.
Subjects are simulated in fixed blocks that may run on a thread pool; all
randomness comes from counter-based noise keyed by (seed, subject, variable, t),
so results do not depend on the block split or on the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from causal.graph import INITIAL, TRANSITION, build_graph, topological_order
from common.errors import ConfigError, DataError, EmptyDataError, ReportError
from estimation.table import OUTCOME, TREATMENT, EstimationTable
from ingestion.schema import (
    CATEGORICAL,
    CONTINUOUS,
    FULL_TIME,
    NO_STUDIES,
    STUDIES_LEVELS,
    UNITS,
    VariableSchema,
)
from learners.linear import CLASSIFICATION, REGRESSION
from learners.selection import LOGISTIC, RIDGE, LearnerSpec
from learners.trees import BAGGED, BOOSTED
from simulator.noise import DEFAULT_WIDTH, GUMBEL_START, NoiseSource
from simulator.samplers import (
    IncomeInitialSampler,
    build_studies_sampler,
    education_level,
    fit_categorical_sampler,
    fit_continuous_sampler,
    fit_empirical_sampler,
    fit_income_sampler,
    fit_zero_inflated_sampler,
)
from simulator.transitions import RULES, MaritalTransition

logger = logging.getLogger(__name__)

OBSERVATIONAL = "observational"
ATOMIC = "atomic"
STUDIES = "studies"
INCOME = "income"
EDUCATION_NUM = "education-num"
INTEGER_COLUMNS = ("age",)
DIAGNOSTIC_COLUMNS = ["variable", "sampler", "metric", "value", "n"]

_TREE_SAMPLERS = {"RandomForestSampler": BAGGED, "BoostedTreeSampler": BOOSTED}
_DEFAULT_INCOME_LEARNER = {"family": BAGGED, "n_trees": 50, "max_depth": 6, "min_samples_leaf": 5}


def json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=json_default)


def state_digest(meta, arrays):
    """SHA-256 over the JSON metadata and every array's dtype, shape and bytes."""
    h = hashlib.sha256(canonical_json(meta).encode("utf-8"))
    for key in sorted(arrays):
        arr = np.ascontiguousarray(arrays[key])
        h.update(f"{key}|{arr.dtype.str}|{arr.shape}".encode("utf-8"))
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class FittedSCM:
    config: object
    graph: object
    schema: dict
    samplers: dict
    rules: dict
    diagnostics: pd.DataFrame
    initial_order: tuple
    transition_order: tuple
    noise_width: int = DEFAULT_WIDTH
    digest: str = ""

    @property
    def variables(self):
        return self.graph.variables

    def state(self):
        """JSON-safe metadata plus a flat dict of numeric arrays."""
        arrays = {}
        samplers = {}
        for name, sampler in self.samplers.items():
            meta, sampler_arrays = sampler.to_state()
            samplers[name] = meta
            arrays.update({f"samplers.{name}.{k}": v for k, v in sampler_arrays.items()})
        meta = {
            "config": self.config.raw,
            "config_digest": self.config.digest,
            "schema": [self.schema[v].to_dict() for v in self.graph.variables],
            "initial_order": list(self.initial_order),
            "transition_order": list(self.transition_order),
            "noise_width": self.noise_width,
            "samplers": samplers,
            "rules": {name: rule.to_state() for name, rule in self.rules.items()},
            "diagnostics": self.diagnostics.to_dict(orient="records"),
        }
        return meta, arrays

    def compute_digest(self):
        return state_digest(*self.state())


def simulator_schema(config, base):
    """Schema of the simulated variables: base-data variables plus studies and USD income."""
    schema = {}
    for name in config.variable_names:
        if name == STUDIES:
            schema[name] = VariableSchema(name, CATEGORICAL, STUDIES_LEVELS)
        elif name == INCOME:
            schema[name] = VariableSchema(name, CONTINUOUS, unit=UNITS[INCOME])
        elif name in base.variables:
            schema[name] = base.variables[name]
        else:
            raise ConfigError(f"config variable '{name}' is not a column of the base data")
    return schema


def _fit_sampler(config, name, base, schema, seed):
    vc = config.variable(name)
    kind = vc.sampler_type
    params = {k: v for k, v in vc.sampler.items() if k != "type"}
    parents = list(vc.parents)
    variable = schema[name]

    if kind == "EmpiricalSampler":
        if parents or variable.is_categorical:
            raise ConfigError(f"EmpiricalSampler for '{name}' needs a parentless continuous variable")
        return fit_empirical_sampler(base, name)
    if kind == "StudiesSampler":
        return build_studies_sampler(parents, config.studies)
    if kind == "IncomeSampler":
        inc = config.income
        return fit_income_sampler(
            base, name, parents, inc.get("learner", _DEFAULT_INCOME_LEARNER),
            noise_std=float(inc.get("noise_std", 10000.0)),
            day_factor=float(inc.get("day_factor", 0.8)),
            zero_workclasses=tuple(inc.get("zero_workclasses", ("Without-pay",))),
            seed=seed,
        )
    if kind == "ZeroInflatedSampler":
        if variable.is_categorical:
            raise ConfigError(f"ZeroInflatedSampler cannot model categorical '{name}'")
        return fit_zero_inflated_sampler(
            base, name, parents, params.get("gate", {"family": LOGISTIC}),
            params.get("magnitude", {"family": BAGGED}),
            noise_coef=float(params.get("noise_coef", config.noise_coef)), seed=seed,
        )

    if kind in _TREE_SAMPLERS and not parents:
        raise ConfigError(f"{kind} for '{name}' needs at least one parent")
    lower, upper = params.pop("lower", None), params.pop("upper", None)
    noise_coef = float(params.pop("noise_coef", config.noise_coef))
    if kind == "LogisticSampler":
        if not variable.is_categorical:
            raise ConfigError(f"LogisticSampler cannot model continuous '{name}'")
        return fit_categorical_sampler(base, name, parents, LearnerSpec(LOGISTIC, CLASSIFICATION, params), seed)
    if kind == "RidgeSampler":
        if variable.is_categorical:
            raise ConfigError(f"RidgeSampler cannot model categorical '{name}'")
        return fit_continuous_sampler(base, name, parents, LearnerSpec(RIDGE, REGRESSION, params),
                                      noise_coef, lower, upper, seed)
    family = _TREE_SAMPLERS[kind]
    if variable.is_categorical:
        return fit_categorical_sampler(base, name, parents, LearnerSpec(family, CLASSIFICATION, params), seed)
    return fit_continuous_sampler(base, name, parents, LearnerSpec(family, REGRESSION, params),
                                  noise_coef, lower, upper, seed)


def _diagnostics_frame(config, samplers):
    rows = []
    for name, sampler in samplers.items():
        d = sampler.diagnostics
        sampler_type = config.variable(name).sampler_type
        rows.append((name, sampler_type, d.get("metric", ""), d.get("value", float("nan")), d.get("n", 0)))
        if "gate_auc" in d:
            rows.append((name, sampler_type, "gate_auc", d["gate_auc"], d.get("n", 0)))
    return pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)


def _noise_width(schema):
    widest = max((len(v.categories) for v in schema.values() if v.is_categorical), default=0)
    return max(DEFAULT_WIDTH, GUMBEL_START + widest)


def _check_rules(rules, schema, graph):
    for name, rule in rules.items():
        undeclared = [p for p in rule.redraw_inputs if p not in graph.trans_parents_curr[name]]
        if undeclared:
            raise ConfigError(f"transition of '{name}' redraws from {undeclared}, "
                              f"which are not among its seq_parents_curr")
        if isinstance(rule, MaritalTransition):
            unknown = set(schema[name].categories) - set(rule.categories)
            if unknown:
                raise ConfigError(f"marital transition matrix lacks states {sorted(unknown)}")


def build_rules(config, samplers):
    rules = {}
    for vc in config.variables:
        cls = RULES[vc.transition_type]
        params = {**{k: v for k, v in vc.seq_sampler.items() if k != "type"},
                  **config.transitions.get(vc.name, {})}
        rules[vc.name] = cls(variable=vc.name, params=params, sampler=samplers[vc.name])
    return rules


def _calibrate_income(config, samplers, order, noise_width):
    sampler = samplers.get(INCOME)
    if not isinstance(sampler, IncomeInitialSampler):
        return samplers
    inc = config.income
    cal = inc.get("calibration") or {}
    n, seed = int(cal.get("n", 20000)), int(cal.get("seed", 12345))
    state = _run_initial(samplers, order, NoiseSource(seed, noise_width), 0, n, Policy.observational(),
                         upto=INCOME)
    calibrated = sampler.calibrate(
        sampler.score(state, n),
        target_mean=float(inc.get("target_mean", 70000.0)),
        target_share=float(inc.get("target_share_above_50k", 0.423)),
        threshold=float(inc.get("threshold", 50000.0)),
        scale=inc.get("scale"),
    )
    logger.info("Calibrated income on %d simulated subjects: shift %.1f, scale %.1f",
                n, calibrated.shift, calibrated.scale)
    return {**samplers, INCOME: calibrated}


def fit_scm(config, base, seed=None):
    """Fit every data-backed sampler and bind the transition rules.

    Args:
        config: SimulatorConfig
        base: BaseDataset the initial-state samplers are fit to
        seed: Learner seed; config.fit_seed when omitted

    Returns:
        FittedSCM with a per-variable diagnostics table and a content digest
    """
    if base.n_rows == 0:
        raise EmptyDataError("base dataset")
    seed = config.fit_seed if seed is None else int(seed)
    graph = build_graph(config.graph_spec())
    schema = simulator_schema(config, base)
    initial_order = tuple(topological_order(graph, INITIAL))
    transition_order = tuple(topological_order(graph, TRANSITION))
    noise_width = _noise_width(schema)

    samplers = {name: _fit_sampler(config, name, base, schema, seed) for name in initial_order}
    samplers = _calibrate_income(config, samplers, initial_order, noise_width)
    rules = build_rules(config, samplers)
    _check_rules(rules, schema, graph)

    scm = FittedSCM(
        config=config,
        graph=graph,
        schema=schema,
        samplers={name: samplers[name] for name in graph.variables},
        rules=rules,
        diagnostics=_diagnostics_frame(config, samplers),
        initial_order=initial_order,
        transition_order=transition_order,
        noise_width=noise_width,
    )
    scm = replace(scm, digest=scm.compute_digest())
    logger.info("Fitted SCM with %d variables on %d rows (digest %s)",
                len(graph.variables), base.n_rows, scm.digest[:12])
    return scm


@dataclass(frozen=True)
class Policy:
    """Observational policy, or an atomic intervention V_t <- value.

    ``value`` is a scalar or one value per subject.
    """

    kind: str = OBSERVATIONAL
    variable: str = None
    t: int = None
    value: object = None

    @classmethod
    def observational(cls):
        return cls()

    @classmethod
    def atomic(cls, variable, t, value):
        if isinstance(value, (list, tuple, np.ndarray, pd.Series)):
            arr = np.asarray(value)
            value = arr.astype(float) if np.issubdtype(arr.dtype, np.number) else arr.astype(object)
        elif isinstance(value, np.generic):
            value = value.item()
        return cls(ATOMIC, variable, int(t), value)

    @property
    def per_subject(self):
        return isinstance(self.value, np.ndarray)

    def validate(self, scm, n, horizon):
        if self.kind == OBSERVATIONAL:
            return
        if self.kind != ATOMIC:
            raise ConfigError(f"unknown policy kind '{self.kind}'")
        if self.variable not in scm.schema:
            raise ConfigError(f"policy targets unknown variable '{self.variable}'")
        if not 1 <= self.t <= horizon:
            raise ConfigError(f"policy time {self.t} is outside [1, {horizon}]")
        values = self.value if self.per_subject else np.asarray([self.value], dtype=object)
        if self.per_subject and len(values) != n:
            raise ConfigError(f"per-subject policy has {len(values)} values for {n} subjects")
        variable = scm.schema[self.variable]
        if variable.is_categorical:
            unknown = set(values.tolist()) - set(variable.categories)
            if unknown:
                raise ConfigError(f"policy value(s) {sorted(map(str, unknown))} not in '{self.variable}'")

    def apply(self, variable, t, values, start, stop):
        if self.kind == OBSERVATIONAL or variable != self.variable or t != self.t:
            return values
        if self.per_subject:
            return self.value[start:stop].astype(np.asarray(values).dtype)
        return np.full(stop - start, self.value, dtype=np.asarray(values).dtype)

    def describe(self):
        if self.kind == OBSERVATIONAL:
            return {"kind": OBSERVATIONAL}
        value = "per-subject" if self.per_subject else self.value
        return {"kind": ATOMIC, "variable": self.variable, "t": self.t, "value": value}


def treatment_policy(a, t0=2):
    """Binary studies intervention: 1 forces full-time studies, 0 forces no studies."""
    if a not in (0, 1):
        raise ConfigError(f"treatment must be 0 or 1, got {a!r}")
    return Policy.atomic(STUDIES, t0, FULL_TIME if a == 1 else NO_STUDIES)


def _run_initial(samplers, order, source, start, stop, policy, upto=None):
    state = {}
    for name in order:
        if name == upto:
            break
        noise = source.block(name, 1, start, stop)
        state[name] = policy.apply(name, 1, samplers[name].sample(state, noise), start, stop)
    return state


def _simulate_block(scm, horizon, policy, seed, bounds):
    start, stop = bounds
    source = NoiseSource(seed, scm.noise_width)
    curr = _run_initial(scm.samplers, scm.initial_order, source, start, stop, policy)
    history = [curr]
    for t in range(2, horizon + 1):
        prev, curr = curr, {}
        for name in scm.transition_order:
            noise = source.block(name, t, start, stop)
            curr[name] = policy.apply(name, t, scm.rules[name].step(prev, curr, noise), start, stop)
        history.append(curr)
    logger.debug("Simulated subjects [%d, %d) for %d steps", start, stop, horizon)
    return history


def _frame(scm, states):
    frame = pd.DataFrame({
        name: np.concatenate([np.asarray(s[name]) for s in states]) for name in scm.graph.variables
    })
    for column in INTEGER_COLUMNS:
        if column in frame.columns:
            frame[column] = np.rint(frame[column].astype(float)).astype("int64")
    if "education" in frame.columns:
        frame.insert(frame.columns.get_loc("education") + 1, EDUCATION_NUM, education_level(frame["education"]))
    return frame


@dataclass(frozen=True)
class Panel:
    """n subjects observed over T steps; frames[t-1] holds time t."""

    frames: tuple
    seed: int
    policy: dict
    config_digest: str
    scm_digest: str
    schema: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.frames[0])

    @property
    def horizon(self):
        return len(self.frames)

    def at(self, t):
        if not 1 <= t <= self.horizon:
            raise DataError(f"time {t} is outside the panel horizon [1, {self.horizon}]")
        return self.frames[t - 1]

    def to_long(self):
        parts = []
        for t, frame in enumerate(self.frames, start=1):
            part = frame.copy()
            part.insert(0, "time", t)
            part.insert(0, "subject", np.arange(len(frame)))
            parts.append(part)
        return pd.concat(parts, ignore_index=True).sort_values(["subject", "time"], kind="stable") \
            .reset_index(drop=True)

    def metadata(self):
        return {
            "seed": self.seed,
            "policy": self.policy,
            "config_digest": self.config_digest,
            "scm_digest": self.scm_digest,
            "n": self.n,
            "T": self.horizon,
            "noise": "philox counter stream keyed by (seed, variable, t), one window per subject",
        }

    def write(self, path):
        """Long-format CSV plus a JSON sidecar with the same stem."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            self.to_long().to_csv(path, index=False)
            path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, default=json_default))
        except OSError as err:
            raise ReportError(f"cannot write panel to {path}: {err}") from err
        logger.info("Wrote panel (%d x %d) to %s", self.n, self.horizon, path)
        return path


def simulate_panel(scm, n, T, policy=None, seed=0, workers=1, block_size=None):
    """Ancestral sampling of n subjects over T steps under a policy.

    Args:
        scm: FittedSCM
        n: Number of subjects, >= 1
        T: Number of time steps, >= 1
        policy: Policy; observational when omitted
        seed: Noise seed
        workers: Threads simulating subject blocks concurrently
        block_size: Subjects per block; config.block_size when omitted

    Returns:
        Panel
    """
    if n < 1 or T < 1:
        raise ConfigError(f"need n >= 1 and T >= 1, got n={n}, T={T}")
    policy = policy or Policy.observational()
    policy.validate(scm, n, T)
    block_size = block_size or scm.config.block_size
    blocks = [(s, min(s + block_size, n)) for s in range(0, n, block_size)]
    run = partial(_simulate_block, scm, T, policy, int(seed))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]

    frames = tuple(_frame(scm, [r[t] for r in results]) for t in range(T))
    logger.info("Simulated panel n=%d T=%d seed=%d policy=%s", n, T, seed, policy.describe())
    return Panel(frames=frames, seed=int(seed), policy=policy.describe(), config_digest=scm.config.digest,
                 scm_digest=scm.digest, schema=dict(scm.schema))


def covariate_frame(panel, t0=2):
    """Covariates at t0 (studies and income excluded) plus income/studies at t0-1."""
    if t0 < 2:
        raise ConfigError(f"t0 must be at least 2 to record previous income and studies, got {t0}")
    now, before = panel.at(t0), panel.at(t0 - 1)
    columns = [c for c in now.columns if c not in (STUDIES, INCOME)]
    frame = now.loc[:, columns].copy()
    frame["income_prev"] = before[INCOME].to_numpy(dtype=float)
    frame["studies_prev"] = before[STUDIES].to_numpy()
    return frame


def covariate_schema(panel, columns):
    schema = dict(panel.schema)
    schema[EDUCATION_NUM] = VariableSchema(EDUCATION_NUM, CONTINUOUS, unit=UNITS[EDUCATION_NUM])
    schema["income_prev"] = VariableSchema("income_prev", CONTINUOUS, unit=UNITS[INCOME])
    schema["studies_prev"] = VariableSchema("studies_prev", CATEGORICAL, STUDIES_LEVELS)
    return {c: schema[c] for c in columns if c in schema}


def extract_cross_section(panel, t0=2, T=7):
    """One row per subject with binary A = studies at t0 and Y = income at T.

    Subjects whose studies at t0 are neither full-time nor none are dropped;
    the frame index keeps the panel subject ids.
    """
    if t0 >= T:
        raise ConfigError(f"t0={t0} must precede the outcome time T={T}")
    if panel.horizon < T:
        raise DataError(f"panel horizon {panel.horizon} is shorter than T={T}")
    frame = covariate_frame(panel, t0)
    covariates = tuple(frame.columns)
    studies = panel.at(t0)[STUDIES].to_numpy()
    frame.index = pd.RangeIndex(panel.n, name="subject")
    frame[TREATMENT] = (studies == FULL_TIME).astype(int)
    frame[OUTCOME] = panel.at(T)[INCOME].to_numpy(dtype=float)

    keep = np.isin(studies, (FULL_TIME, NO_STUDIES))
    dropped = int((~keep).sum())
    if dropped:
        logger.info("Dropped %d of %d subjects with non-binary studies at t=%d", dropped, panel.n, t0)
    if not keep.any():
        raise EmptyDataError(f"cross-section at t={t0} (every subject had a course)")
    frame = frame.loc[keep]
    return EstimationTable(frame=frame, covariates=covariates, schema=covariate_schema(panel, covariates),
                           dropped=dropped)


@dataclass(frozen=True)
class CateBenchmark:
    observational: EstimationTable
    counterfactual: pd.DataFrame
    y1: np.ndarray
    y0: np.ndarray
    t0: int
    horizon: int
    seed_obs: int
    seed_cf: int
    observational_panel: Panel = field(repr=False, default=None)
    treated_panel: Panel = field(repr=False, default=None)
    control_panel: Panel = field(repr=False, default=None)

    @property
    def effects(self):
        return self.y1 - self.y0

    @property
    def ate(self):
        return float(np.mean(self.effects))

    def counterfactual_schema(self):
        return covariate_schema(self.control_panel, self.counterfactual.columns)


def build_cate_benchmark(scm, n_obs=50000, n_cf=50000, s_obs=0, s_cf=1, t0=2, T=7, workers=1):
    """Observational table plus a seed-coupled pair of intervened panels.

    Both arms share the noise seed s_cf, so they coincide before t0 and every
    difference afterwards is caused by the intervention on studies at t0.
    """
    if s_obs == s_cf:
        raise ConfigError(f"observational and counterfactual seeds must differ, both are {s_obs}")
    obs_panel = simulate_panel(scm, n_obs, T, Policy.observational(), s_obs, workers)
    observational = extract_cross_section(obs_panel, t0, T)

    treated = simulate_panel(scm, n_cf, T, treatment_policy(1, t0), s_cf, workers)
    control = simulate_panel(scm, n_cf, T, treatment_policy(0, t0), s_cf, workers)
    y1 = treated.at(T)[INCOME].to_numpy(dtype=float)
    y0 = control.at(T)[INCOME].to_numpy(dtype=float)
    benchmark = CateBenchmark(
        observational=observational,
        counterfactual=covariate_frame(control, t0),
        y1=y1,
        y0=y0,
        t0=t0,
        horizon=T,
        seed_obs=s_obs,
        seed_cf=s_cf,
        observational_panel=obs_panel,
        treated_panel=treated,
        control_panel=control,
    )
    logger.info("Built CATE benchmark: %d observational rows (%d dropped), %d counterfactual subjects, ATE %.1f",
                observational.n, observational.dropped, n_cf, benchmark.ate)
    return benchmark
