"""YAML simulator configuration, validated into frozen dataclasses."""
from dataclasses import dataclass, field
import hashlib
import json
import logging
from pathlib import Path

import yaml

from common.errors import ConfigError

logger = logging.getLogger(__name__)

SAMPLER_TYPES = (
    "EmpiricalSampler", "LogisticSampler", "RandomForestSampler", "BoostedTreeSampler",
    "RidgeSampler", "ZeroInflatedSampler", "StudiesSampler", "IncomeSampler",
)
TRANSITION_TYPES = (
    "AgeTransition", "ConstantTransition", "EducationTransition", "WorkclassTransition",
    "MaritalTransition", "OccupationTransition", "RelationshipTransition", "HoursTransition",
    "CapitalTransition", "StudiesTransition", "IncomeTransition", "StayOrRedrawTransition",
)


@dataclass(frozen=True)
class VariableConfig:
    name: str
    parents: tuple
    sampler: dict
    seq_parents_curr: tuple
    seq_parents_prev: tuple
    seq_sampler: dict

    @property
    def sampler_type(self):
        return self.sampler["type"]

    @property
    def transition_type(self):
        return self.seq_sampler["type"]


@dataclass(frozen=True)
class BenchmarkConfig:
    t0: int = 2
    horizon: int = 7
    n_obs: int = 50000
    n_cf: int = 50000
    seed_obs: int = 0
    seed_cf: int = 1
    propensity_clip: float = 0.01
    bootstrap_iterations: int = 1000
    alpha: float = 0.05
    bootstrap_seed: int = 0
    cv_folds: int = 5
    cv_samples: int = 20
    education_bins: int = 16


@dataclass(frozen=True)
class SimulatorConfig:
    name: str
    version: str
    horizon: int
    noise_coef: float
    block_size: int
    fit_seed: int
    merge_married: bool
    variables: tuple
    transitions: dict
    studies: dict
    income: dict
    benchmark: BenchmarkConfig
    estimators: dict
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def variable_names(self):
        return tuple(v.name for v in self.variables)

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise ConfigError(f"unknown variable '{name}'")

    def graph_spec(self):
        return {
            v.name: {
                "parents": list(v.parents),
                "seq_parents_curr": list(v.seq_parents_curr),
                "seq_parents_prev": list(v.seq_parents_prev),
            }
            for v in self.variables
        }

    @property
    def digest(self):
        return config_digest(self)


def config_digest(config):
    raw = config.raw if isinstance(config, SimulatorConfig) else config
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _as_list(value, where):
    if value is None:
        return ()
    if isinstance(value, str) or not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where} must be a list")
    return tuple(value)


def _typed_block(block, where, vocabulary):
    if isinstance(block, str):
        block = {"type": block}
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError(f"{where} needs a 'type'")
    if block["type"] not in vocabulary:
        raise ConfigError(f"{where} has unknown type '{block['type']}'")
    return dict(block)


def _int(section, key, default, minimum=None):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be at least {minimum}, got {value}")
    return value


def _float(section, key, default, low=None, high=None):
    value = section.get(key, default)
    try:
        value = float(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"'{key}' must be a number, got {value!r}") from err
    if (low is not None and value < low) or (high is not None and value > high):
        raise ConfigError(f"'{key}'={value} is outside [{low}, {high}]")
    return value


def parse_config(raw):
    """Validate a parsed YAML mapping into a SimulatorConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")

    sim = raw.get("simulator") or {}
    variables_raw = raw.get("variables")
    if not variables_raw or not isinstance(variables_raw, dict):
        raise ConfigError("configuration needs a non-empty 'variables' mapping")

    variables = []
    for name, block in variables_raw.items():
        block = block or {}
        where = f"variables.{name}"
        if "sampler" not in block or "seq_sampler" not in block:
            raise ConfigError(f"{where} needs both 'sampler' and 'seq_sampler'")
        variables.append(VariableConfig(
            name=name,
            parents=_as_list(block.get("parents"), f"{where}.parents"),
            sampler=_typed_block(block["sampler"], f"{where}.sampler", SAMPLER_TYPES),
            seq_parents_curr=_as_list(block.get("seq_parents_curr"), f"{where}.seq_parents_curr"),
            seq_parents_prev=_as_list(block.get("seq_parents_prev"), f"{where}.seq_parents_prev"),
            seq_sampler=_typed_block(block["seq_sampler"], f"{where}.seq_sampler", TRANSITION_TYPES),
        ))

    declared = {v.name for v in variables}
    transitions = raw.get("transitions") or {}
    for name in transitions:
        if name not in declared:
            raise ConfigError(f"transitions section names unknown variable '{name}'")

    bench = raw.get("benchmark") or {}
    benchmark = BenchmarkConfig(
        t0=_int(bench, "t0", 2, 1),
        horizon=_int(bench, "horizon", 7, 2),
        n_obs=_int(bench, "n_obs", 50000, 1),
        n_cf=_int(bench, "n_cf", 50000, 1),
        seed_obs=_int(bench, "seed_obs", 0, 0),
        seed_cf=_int(bench, "seed_cf", 1, 0),
        propensity_clip=_float(bench, "propensity_clip", 0.01, 0.0, 0.5),
        bootstrap_iterations=_int(bench, "bootstrap_iterations", 1000, 1),
        alpha=_float(bench, "alpha", 0.05, 0.0, 1.0),
        bootstrap_seed=_int(bench, "bootstrap_seed", 0, 0),
        cv_folds=_int(bench, "cv_folds", 5, 2),
        cv_samples=_int(bench, "cv_samples", 20, 1),
        education_bins=_int(bench, "education_bins", 16, 1),
    )
    if benchmark.t0 >= benchmark.horizon:
        raise ConfigError(f"benchmark t0={benchmark.t0} must precede horizon={benchmark.horizon}")

    return SimulatorConfig(
        name=str(sim.get("name", "IncomeSCM")),
        version=str(sim.get("version", "1.0")),
        horizon=_int(sim, "horizon", benchmark.horizon, 1),
        noise_coef=_float(sim, "noise_coef", 1.0, 0.0),
        block_size=_int(sim, "block_size", 4096, 1),
        fit_seed=_int(sim, "fit_seed", 0, 0),
        merge_married=bool(sim.get("merge_married", True)),
        variables=tuple(variables),
        transitions={k: dict(v or {}) for k, v in transitions.items()},
        studies=dict(raw.get("studies") or {}),
        income=dict(raw.get("income") or {}),
        benchmark=benchmark,
        estimators=dict(raw.get("estimators") or {}),
        raw=raw,
    )


def load_config(path):
    """Read and validate a YAML configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    config = parse_config(raw)
    logger.info("Loaded config %s (%d variables, digest %s)", path, len(config.variables), config.digest[:12])
    return config
