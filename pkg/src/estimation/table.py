"""Cross-sectional estimation table: covariates, a binary treatment and an outcome."""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
import pandas as pd

from common.errors import DataError, EmptyDataError, MissingFieldError, NumericError, ReportError
from ingestion.schema import CONTINUOUS, VariableSchema, infer_schema
from learners.encoder import FeatureEncoder

logger = logging.getLogger(__name__)

TREATMENT = "A"
OUTCOME = "Y"


@dataclass(frozen=True)
class EstimationTable:
    """Rows of (covariates, A, Y) with declared column roles.

    ``adjustment`` names the columns estimators adjust for; ``conditioning``
    names the columns CATE is defined over. Both default to all covariates.
    """

    frame: pd.DataFrame
    covariates: tuple
    schema: dict = field(default_factory=dict)
    adjustment: tuple = None
    conditioning: tuple = None
    dropped: int = 0

    def __post_init__(self):
        if len(self.frame) == 0:
            raise EmptyDataError("estimation table")
        for column in (*self.covariates, TREATMENT, OUTCOME):
            if column not in self.frame.columns:
                raise MissingFieldError(column)
        a = self.frame[TREATMENT].to_numpy()
        if not np.isin(a, (0, 1)).all():
            raise DataError("treatment column must be binary 0/1")
        if not np.isfinite(self.frame[OUTCOME].to_numpy(dtype=float)).all():
            raise NumericError("outcome column contains non-finite values")

        schema = dict(self.schema)
        missing = [c for c in self.covariates if c not in schema]
        if missing:
            schema.update({v.name: v for v in infer_schema(self.frame[missing])})
        object.__setattr__(self, "schema", schema)
        if self.adjustment is None:
            object.__setattr__(self, "adjustment", tuple(self.covariates))
        if self.conditioning is None:
            object.__setattr__(self, "conditioning", tuple(self.adjustment))
        for column in (*self.adjustment, *self.conditioning):
            if column not in self.covariates:
                raise MissingFieldError(column)

    @property
    def n(self):
        return len(self.frame)

    @property
    def a(self):
        return self.frame[TREATMENT].to_numpy(dtype=int)

    @property
    def y(self):
        return self.frame[OUTCOME].to_numpy(dtype=float)

    def variables(self, columns):
        return [self.schema[c] for c in columns]

    def with_roles(self, adjustment, conditioning=None):
        return replace(self, adjustment=tuple(adjustment),
                       conditioning=tuple(conditioning) if conditioning is not None else tuple(adjustment))

    def subset(self, mask):
        return replace(self, frame=self.frame.loc[np.asarray(mask)])

    def require_both_arms(self):
        counts = np.bincount(self.a, minlength=2)
        if counts.min() == 0:
            raise NumericError(f"no treatment variation: arm sizes {counts.tolist()}")
        return counts

    def write(self, path):
        try:
            self.frame.to_csv(path, index=self.frame.index.name is not None)
        except OSError as err:
            raise ReportError(f"cannot write estimation table to {path}: {err}") from err


def adjustment_design(table):
    """Encoder fit on the table's adjustment columns and the encoded training matrix."""
    encoder = FeatureEncoder.fit(table.frame, table.variables(table.adjustment))
    return encoder, encoder.transform(table.frame)


@dataclass(frozen=True)
class EffectEstimate:
    """ATE in outcome units, optional per-row CATE, and the fitted effect model.

    ``fit`` exposes ``cate(frame)`` for estimators that model effects per
    subject; IPW and matching leave it unset.
    """

    estimator: str
    ate: float
    cate: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    fit: object = field(default=None, repr=False)

    @property
    def has_cate(self):
        return self.fit is not None

    def predict_cate(self, frame):
        if self.fit is None:
            raise NumericError(f"estimator '{self.estimator}' does not model conditional effects")
        return self.fit.cate(frame)


def table_from_arrays(covariates, a, y, schema=None):
    """Build a table from a covariate frame and treatment/outcome arrays."""
    frame = covariates.reset_index(drop=True).copy()
    frame[TREATMENT] = np.asarray(a, dtype=int)
    frame[OUTCOME] = np.asarray(y, dtype=float)
    schema = schema or {c: VariableSchema(c, CONTINUOUS) for c in covariates.columns
                        if pd.api.types.is_numeric_dtype(covariates[c])}
    return EstimationTable(frame=frame, covariates=tuple(covariates.columns), schema=schema)
