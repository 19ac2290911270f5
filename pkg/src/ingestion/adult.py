"""Loading and cleaning of the Adult census extract.

The raw files are the canonical UCI release: ``adult.data`` (train) and
``adult.test`` (test, which opens with a one-line banner and carries a
trailing period on its income labels). Both partitions are used.
"""
from dataclasses import dataclass, field
import hashlib
import logging
from pathlib import Path
import re

import pandas as pd
from pandas.api.types import is_numeric_dtype

from common.errors import (
    ColumnCountError,
    DataError,
    EmptyDataError,
    MissingFileError,
    NumericFieldError,
)
from ingestion.schema import (
    CATEGORICAL,
    CONTINUOUS,
    UNITS,
    VariableSchema,
    freeze_vocabulary,
    schema_by_name,
)

logger = logging.getLogger(__name__)

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)
NUMERIC_COLUMNS = ("age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week")
MISSING_MARKER = "?"
ADULT_FILES = ("adult.data", "adult.test")

BASE_COLUMNS = (
    "age", "workclass", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-net", "hours-per-week", "native-country", "income",
)
BASE_CONTINUOUS = ("age", "education-num", "capital-net", "hours-per-week")
INCOME_LABELS = (0, 1)
INCOME_UNIT = "indicator: income > 50K USD"

_PARSER_LINE = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


@dataclass(frozen=True)
class BaseDataset:
    frame: pd.DataFrame
    schema: tuple
    provenance: str
    dropped_rows: int = 0
    variables: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", schema_by_name(self.schema))
        missing = [v.name for v in self.schema if v.name not in self.frame.columns]
        if missing:
            raise DataError(f"schema variables missing from frame: {missing}")

    @property
    def n_rows(self):
        return len(self.frame)

    def to_csv(self, path):
        self.frame.to_csv(path, index=False)


def _resolve_paths(path):
    if isinstance(path, (list, tuple)):
        return [Path(p) for p in path]
    path = Path(path)
    if path.is_dir():
        return [path / name for name in ADULT_FILES if (path / name).exists()] or [path / ADULT_FILES[0]]
    return [path]


def _read_one(path):
    if not path.exists():
        raise MissingFileError(path)

    try:
        table = pd.read_csv(
            path,
            header=None,
            dtype=str,
            skipinitialspace=True,
            comment="|",
            skip_blank_lines=True,
            keep_default_na=False,
        )
    except pd.errors.EmptyDataError as err:
        raise EmptyDataError(str(path)) from err
    except pd.errors.ParserError as err:
        match = _PARSER_LINE.search(str(err))
        if match:
            expected, line, found = (int(g) for g in match.groups())
            raise ColumnCountError(str(path), line, expected, found) from err
        raise DataError(f"cannot parse {path}: {err}") from err

    if table.empty:
        raise EmptyDataError(str(path))
    if table.shape[1] != len(ADULT_COLUMNS):
        raise ColumnCountError(str(path), 1, len(ADULT_COLUMNS), table.shape[1])

    table.columns = list(ADULT_COLUMNS)
    table = table.apply(lambda col: col.str.strip())

    # short records are padded with NaN by the parser
    short_rows = table.index[table["income"].isna() | (table["income"] == "")]
    if len(short_rows):
        record = int(short_rows[0]) + 1
        row = table.loc[short_rows[0]]
        found = int((row.notna() & (row != "")).sum())
        raise ColumnCountError(str(path), record, len(ADULT_COLUMNS), found)

    for column in NUMERIC_COLUMNS:
        raw = table[column]
        parsed = pd.to_numeric(raw.where(raw != MISSING_MARKER), errors="coerce")
        bad = parsed.isna() & (raw != MISSING_MARKER)
        if bad.any():
            first = bad.idxmax()
            raise NumericFieldError(str(path), int(first) + 1, column, raw[first])
        table[column] = parsed

    # adult.test labels read ">50K." / "<=50K."
    table["income"] = table["income"].str.rstrip(".")
    return table


def load_adult(path):
    """Load the raw Adult records with missing markers preserved.

    Args:
        path: A file, a list of files, or a directory holding adult.data and adult.test

    Returns:
        DataFrame with the 15 canonical columns; numeric "?" cells become NaN,
        categorical "?" cells keep the literal marker
    """
    paths = _resolve_paths(path)
    tables = [_read_one(p) for p in paths]
    raw = pd.concat(tables, ignore_index=True)

    digest = hashlib.sha256()
    for p in paths:
        digest.update(p.read_bytes())
    raw.attrs["digest"] = digest.hexdigest()
    raw.attrs["source"] = [str(p) for p in paths]

    logger.info("Loaded %d raw Adult records from %d file(s)", len(raw), len(paths))
    return raw


def _frame_digest(frame):
    hashed = pd.util.hash_pandas_object(frame, index=False).values
    return hashlib.sha256(hashed.tobytes()).hexdigest()


def _income_indicator(series):
    if not is_numeric_dtype(series):
        return (series.str.strip().str.rstrip(".") == ">50K").astype("int64")
    return series.astype("int64")


def preprocess(raw, merge_married=True):
    """Clean raw Adult records into the base dataset.

    Drops rows with any missing cell, drops the sample weight, merges capital
    gains and losses into capital-net and codes income as a >50K indicator.
    Accepts an already-cleaned BaseDataset, in which case the result is
    structurally identical to the input.

    Args:
        raw: Raw table from load_adult, or a BaseDataset
        merge_married: Collapse the Married-* marital categories into "Married"

    Returns:
        BaseDataset
    """
    previous_drops = 0
    if isinstance(raw, BaseDataset):
        previous_drops = raw.dropped_rows
        provenance = raw.provenance
        frame = raw.frame.copy()
    else:
        provenance = raw.attrs.get("digest") or _frame_digest(raw)
        frame = raw.copy()

    text_columns = [c for c in frame.columns if not is_numeric_dtype(frame[c])]
    for column in text_columns:
        frame[column] = frame[column].str.strip()

    missing = frame.isna().any(axis=1)
    for column in text_columns:
        missing |= frame[column] == MISSING_MARKER
    dropped = int(missing.sum())
    frame = frame.loc[~missing].reset_index(drop=True)

    frame = frame.drop(columns=["fnlwgt"], errors="ignore")
    if "capital-gain" in frame.columns and "capital-loss" in frame.columns:
        frame["capital-net"] = frame["capital-gain"] - frame["capital-loss"]
        frame = frame.drop(columns=["capital-gain", "capital-loss"])

    frame["income"] = _income_indicator(frame["income"])
    if merge_married:
        frame["marital-status"] = frame["marital-status"].where(
            ~frame["marital-status"].str.startswith("Married"), "Married"
        )

    missing_columns = [c for c in BASE_COLUMNS if c not in frame.columns]
    if missing_columns:
        raise DataError(f"raw table lacks columns {missing_columns}")
    frame = frame.loc[:, list(BASE_COLUMNS)]
    for column in BASE_CONTINUOUS:
        frame[column] = frame[column].astype("int64")

    schema = []
    for name in BASE_COLUMNS:
        if name == "income":
            schema.append(VariableSchema(name, CATEGORICAL, INCOME_LABELS, INCOME_UNIT))
        elif name in BASE_CONTINUOUS:
            schema.append(VariableSchema(name, CONTINUOUS, unit=UNITS.get(name, "")))
        else:
            schema.append(VariableSchema(name, CATEGORICAL, freeze_vocabulary(name, frame[name].unique())))

    logger.info("Preprocessed base dataset: %d rows kept, %d dropped", len(frame), dropped)
    return BaseDataset(
        frame=frame,
        schema=tuple(schema),
        provenance=provenance,
        dropped_rows=previous_drops + dropped,
    )
