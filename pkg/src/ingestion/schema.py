"""Variable schema and the canonical Adult vocabularies."""
from dataclasses import dataclass, field
import logging

import pandas as pd
from pandas.api.types import is_numeric_dtype

from common.errors import DataError

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"

# Education degrees in order of the numeric education-num code (1..16).
EDUCATION_LEVELS = (
    "Preschool", "1st-4th", "5th-6th", "7th-8th", "9th", "10th", "11th", "12th",
    "HS-grad", "Some-college", "Assoc-voc", "Assoc-acdm", "Bachelors", "Masters",
    "Prof-school", "Doctorate",
)

STUDIES_LEVELS = ("Full-time studies", "Day course", "Evening course", "No studies")
FULL_TIME = "Full-time studies"
DAY_COURSE = "Day course"
EVENING_COURSE = "Evening course"
NO_STUDIES = "No studies"

WITHOUT_PAY = "Without-pay"

CANONICAL_VOCABULARIES = {
    "workclass": (
        "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov", "Local-gov",
        "State-gov", "Without-pay", "Never-worked",
    ),
    "education": EDUCATION_LEVELS,
    "marital-status": (
        "Never-married", "Married", "Married-civ-spouse", "Married-spouse-absent",
        "Married-AF-spouse", "Divorced", "Separated", "Widowed",
    ),
    "occupation": (
        "Tech-support", "Craft-repair", "Other-service", "Sales", "Exec-managerial",
        "Prof-specialty", "Handlers-cleaners", "Machine-op-inspct", "Adm-clerical",
        "Farming-fishing", "Transport-moving", "Priv-house-serv", "Protective-serv",
        "Armed-Forces",
    ),
    "relationship": (
        "Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried",
    ),
    "race": ("White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"),
    "sex": ("Female", "Male"),
    "native-country": (
        "United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany",
        "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece", "South", "China",
        "Cuba", "Iran", "Honduras", "Philippines", "Italy", "Poland", "Jamaica",
        "Vietnam", "Mexico", "Portugal", "Ireland", "France", "Dominican-Republic",
        "Laos", "Ecuador", "Taiwan", "Haiti", "Columbia", "Hungary", "Guatemala",
        "Nicaragua", "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
        "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands",
    ),
    "studies": STUDIES_LEVELS,
}

UNITS = {
    "age": "years",
    "education-num": "years of schooling (1-16)",
    "capital-net": "USD/year",
    "hours-per-week": "hours/week",
    "income": "USD/year",
}


@dataclass(frozen=True)
class VariableSchema:
    name: str
    kind: str
    categories: tuple = field(default_factory=tuple)
    unit: str = ""

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise DataError(f"variable '{self.name}' has unknown kind '{self.kind}'")
        if self.kind == CATEGORICAL:
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"variable '{self.name}' has duplicate categories")
            if len(self.categories) < 2:
                raise DataError(f"categorical variable '{self.name}' needs at least 2 categories")
        elif self.categories:
            raise DataError(f"continuous variable '{self.name}' cannot declare categories")

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL

    def index_of(self, label):
        try:
            return self.categories.index(label)
        except ValueError:
            return -1

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "categories": list(self.categories),
            "unit": self.unit,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            name=payload["name"],
            kind=payload["kind"],
            categories=tuple(payload.get("categories", ())),
            unit=payload.get("unit", ""),
        )


def freeze_vocabulary(name, observed):
    """Order observed labels canonically; fall back to the full vocabulary when degenerate.

    Known labels keep their canonical order, unknown labels follow alphabetically.
    A variable with fewer than two observed labels (tiny or empty tables) gets
    its whole canonical vocabulary so the schema stays valid.
    """
    canonical = CANONICAL_VOCABULARIES.get(name, ())
    observed = set(observed)
    ordered = [c for c in canonical if c in observed]
    ordered += sorted(observed - set(canonical))
    if len(ordered) < 2:
        if len(canonical) >= 2:
            logger.warning("variable '%s' has %d observed categories; using canonical vocabulary",
                           name, len(ordered))
            return tuple(canonical)
        raise DataError(f"categorical variable '{name}' has fewer than 2 categories")
    return tuple(ordered)


def infer_schema(frame, categorical=None):
    """Build a schema for every column of a frame.

    Args:
        frame: DataFrame with one column per variable
        categorical: Optional explicit set of categorical column names;
            by default non-numeric columns are categorical

    Returns:
        List of VariableSchema in column order
    """
    schema = []
    for name in frame.columns:
        is_cat = (name in categorical) if categorical is not None else not is_numeric_dtype(frame[name])
        if is_cat:
            values = pd.unique(frame[name].dropna())
            schema.append(VariableSchema(name, CATEGORICAL, freeze_vocabulary(name, values)))
        else:
            schema.append(VariableSchema(name, CONTINUOUS, unit=UNITS.get(name, "")))
    return schema


def schema_by_name(schema):
    by_name = {}
    for variable in schema:
        if variable.name in by_name:
            raise DataError(f"duplicate variable '{variable.name}' in schema")
        by_name[variable.name] = variable
    return by_name
