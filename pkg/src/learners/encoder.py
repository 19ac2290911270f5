"""One-hot / standardized feature encoding of schema-typed records."""
from dataclasses import dataclass, field
import logging

import numpy as np
import pandas as pd

from common.errors import MissingFieldError, UnknownCategoryError
from ingestion.schema import VariableSchema

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureEncoder:
    """Maps records to numeric vectors.

    Categorical variables take one column per category (one-hot), continuous
    variables one standardized column using training mean and deviation.
    """

    schema: tuple
    means: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    layout: dict = field(init=False, compare=False)

    def __post_init__(self):
        layout, offset = {}, 0
        for variable in self.schema:
            width = len(variable.categories) if variable.is_categorical else 1
            layout[variable.name] = (offset, width)
            offset += width
        object.__setattr__(self, "layout", layout)

    @classmethod
    def fit(cls, frame, schema):
        schema = tuple(schema)
        means, scales = {}, {}
        for variable in schema:
            if variable.is_categorical:
                continue
            if variable.name not in frame.columns:
                raise MissingFieldError(variable.name)
            values = frame[variable.name].to_numpy(dtype=float)
            means[variable.name] = float(values.mean()) if len(values) else 0.0
            std = float(values.std()) if len(values) else 0.0
            scales[variable.name] = std if std > 0 else 1.0
        return cls(schema=schema, means=means, scales=scales)

    @property
    def width(self):
        return sum(w for _, w in self.layout.values())

    @property
    def feature_names(self):
        names = []
        for variable in self.schema:
            if variable.is_categorical:
                names += [f"{variable.name}={c}" for c in variable.categories]
            else:
                names.append(variable.name)
        return names

    def transform(self, frame):
        out = np.zeros((len(frame), self.width))
        for variable in self.schema:
            if variable.name not in frame.columns:
                raise MissingFieldError(variable.name)
            offset, width = self.layout[variable.name]
            column = frame[variable.name]
            if variable.is_categorical:
                codes = pd.Categorical(column, categories=list(variable.categories)).codes
                if (codes < 0).any():
                    raise UnknownCategoryError(variable.name, column.iloc[int(np.argmax(codes < 0))])
                out[np.arange(len(frame)), offset + codes] = 1.0
            else:
                values = column.to_numpy(dtype=float)
                out[:, offset] = (values - self.means[variable.name]) / self.scales[variable.name]
        return out

    def encode(self, record):
        """Encode a single record given as a mapping of variable name to value."""
        for variable in self.schema:
            if variable.name not in record:
                raise MissingFieldError(variable.name)
        row = pd.DataFrame({v.name: [record[v.name]] for v in self.schema})
        return self.transform(row)[0]

    def to_dict(self):
        return {
            "schema": [v.to_dict() for v in self.schema],
            "means": dict(self.means),
            "scales": dict(self.scales),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            schema=tuple(VariableSchema.from_dict(v) for v in payload["schema"]),
            means=dict(payload["means"]),
            scales=dict(payload["scales"]),
        )
