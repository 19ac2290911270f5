"""Shared test fixtures and configuration."""
import os
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import pytest  # noqa: E402
import yaml  # noqa: E402

from estimation.table import table_from_arrays  # noqa: E402
from ingestion.adult import load_adult, preprocess  # noqa: E402
from ingestion.schema import EDUCATION_LEVELS  # noqa: E402
from simulator.config import parse_config  # noqa: E402
from simulator.scm import fit_scm  # noqa: E402

PROJECT_ROOT = Path(__file__).resolve().parents[1]
CONFIG_PATH = PROJECT_ROOT / "configs" / "incomescm.yaml"
ADULT_TEST_BANNER = "|1x3 Cross validator"

_WORKCLASS = (["Private"] * 14 + ["Self-emp-not-inc"] * 2 + ["Local-gov", "State-gov", "Federal-gov"]
              + ["Without-pay"])
_EDU_WEIGHTS = np.array([1, 1, 1, 2, 2, 3, 3, 2, 30, 20, 4, 4, 15, 6, 2, 2], dtype=float)
_OCCUPATION = ("Craft-repair", "Sales", "Exec-managerial", "Prof-specialty", "Adm-clerical", "Other-service")
_RACE = ("White",) * 8 + ("Black", "Asian-Pac-Islander")
_COUNTRY = ("United-States",) * 18 + ("Mexico", "Canada")


def make_adult_rows(n, seed=0, missing_every=40, test_labels=False):
    """Synthetic records in the raw Adult layout (15 comma-separated fields).

    Every ``missing_every``-th record carries a "?" in workclass and occupation.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        age = int(rng.integers(17, 80))
        sex = "Male" if rng.random() < 0.67 else "Female"
        edu_code = int(rng.choice(16, p=_EDU_WEIGHTS / _EDU_WEIGHTS.sum())) + 1
        education = EDUCATION_LEVELS[edu_code - 1]
        workclass = str(rng.choice(_WORKCLASS))
        if age < 25:
            marital = "Never-married" if rng.random() < 0.85 else "Married-civ-spouse"
        else:
            marital = str(rng.choice(["Married-civ-spouse", "Never-married", "Divorced", "Separated",
                                      "Widowed", "Married-spouse-absent"], p=[0.5, 0.2, 0.15, 0.05, 0.05, 0.05]))
        if age < 23 and marital == "Never-married":
            relationship = "Own-child"
        elif marital.startswith("Married"):
            relationship = "Husband" if sex == "Male" else "Wife"
        else:
            relationship = str(rng.choice(["Not-in-family", "Unmarried"]))
        occupation = _OCCUPATION[min(len(_OCCUPATION) - 1, max(0, (edu_code - 6) // 2 + int(rng.integers(0, 2))))]
        hours = int(np.clip(rng.normal(40 + (5 if sex == "Male" else -3), 10), 1, 99))
        gain = int(rng.choice([2174, 5178, 7688, 15024])) if rng.random() < 0.1 else 0
        loss = int(rng.choice([1902, 1887])) if gain == 0 and rng.random() < 0.05 else 0
        score = -9.0 + 0.45 * edu_code + 0.04 * min(age, 60) + 0.03 * hours + (0.5 if sex == "Male" else 0.0)
        label = ">50K" if rng.random() < 1.0 / (1.0 + np.exp(-score)) else "<=50K"
        if test_labels:
            label += "."
        if missing_every and i % missing_every == missing_every - 1:
            workclass = occupation = "?"
        fields = [age, workclass, int(rng.integers(20000, 400000)), education, edu_code, marital, occupation,
                  relationship, str(rng.choice(_RACE)), sex, gain, loss, hours, str(rng.choice(_COUNTRY)), label]
        rows.append(", ".join(str(f) for f in fields))
    return rows


def write_adult_files(directory, n_train=900, n_test=300, seed=0):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "adult.data").write_text("\n".join(make_adult_rows(n_train, seed)) + "\n")
    test_rows = make_adult_rows(n_test, seed + 1, test_labels=True)
    (directory / "adult.test").write_text("\n".join([ADULT_TEST_BANNER] + test_rows) + "\n")
    return directory


def small_config_raw(**benchmark):
    """Project config with lightweight learners and a small calibration cohort."""
    raw = yaml.safe_load(CONFIG_PATH.read_text())
    for block in raw["variables"].values():
        sampler = block["sampler"]
        if sampler["type"] in ("RandomForestSampler", "BoostedTreeSampler"):
            sampler.update(n_trees=4, min_samples_leaf=5, max_depth=6)
        if sampler["type"] == "ZeroInflatedSampler":
            sampler["magnitude"].update(n_trees=4, min_samples_leaf=5)
    raw["income"]["learner"].update(n_trees=4)
    raw["income"]["calibration"] = {"n": 2000, "seed": 7}
    raw["simulator"]["block_size"] = 128
    raw["benchmark"].update({"n_obs": 600, "n_cf": 600, "bootstrap_iterations": 50, "cv_folds": 3,
                             "cv_samples": 2, **benchmark})
    return raw


@pytest.fixture(scope="session")
def adult_dir(tmp_path_factory):
    """Directory holding synthetic adult.data and adult.test files."""
    return write_adult_files(tmp_path_factory.mktemp("adult"))


@pytest.fixture(scope="session")
def raw_adult(adult_dir):
    return load_adult(adult_dir)


@pytest.fixture(scope="session")
def base_dataset(raw_adult):
    return preprocess(raw_adult)


@pytest.fixture(scope="session")
def small_config():
    return parse_config(small_config_raw())


@pytest.fixture(scope="session")
def fitted_scm(small_config, base_dataset):
    """SCM fit to the synthetic Adult data with lightweight learners."""
    return fit_scm(small_config, base_dataset, seed=0)


@pytest.fixture(scope="session")
def real_adult_path():
    """Directory with the real Adult files; tests using it skip when absent."""
    candidate = Path(os.getenv("INCOMESCM_ADULT_PATH", PROJECT_ROOT / "data" / "adult"))
    if not ((candidate / "adult.data").exists() and (candidate / "adult.test").exists()):
        pytest.skip("real Adult files not available")
    return candidate


@pytest.fixture
def confounded_dgp():
    """Linear outcome with constant effect 3 and a logistic propensity in z1.

    Returns (table, true propensity, true effect).
    """
    rng = np.random.default_rng(11)
    n = 4000
    z = pd.DataFrame({"z1": rng.normal(size=n), "z2": rng.normal(size=n)})
    e = 1.0 / (1.0 + np.exp(-0.8 * z["z1"].to_numpy()))
    a = (rng.random(n) < e).astype(int)
    y = 1.0 + 2.0 * z["z1"].to_numpy() - z["z2"].to_numpy() + 3.0 * a + rng.normal(scale=0.5, size=n)
    return table_from_arrays(z, a, y), e, 3.0


@pytest.fixture
def heterogeneous_dgp():
    """Randomized treatment with effect z1: y = z1 * a + noise.

    Returns (table, per-row true effect).
    """
    rng = np.random.default_rng(5)
    n = 4000
    z = pd.DataFrame({"z1": rng.normal(size=n), "z2": rng.normal(size=n)})
    a = (rng.random(n) < 0.5).astype(int)
    y = z["z1"].to_numpy() * a + rng.normal(scale=0.1, size=n)
    return table_from_arrays(z, a, y), z["z1"].to_numpy()


@pytest.fixture
def randomized_dgp():
    """Randomized treatment with constant effect 2 and no confounding."""
    rng = np.random.default_rng(21)
    n = 2000
    z = pd.DataFrame({"z1": rng.normal(size=n), "z2": rng.normal(size=n)})
    a = (rng.random(n) < 0.5).astype(int)
    y = 0.5 * z["z1"].to_numpy() + 2.0 * a + rng.normal(size=n)
    return table_from_arrays(z, a, y)
