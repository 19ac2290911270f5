"""Descriptive statistics of a cohort and side-by-side comparison with Adult."""
from dataclasses import dataclass
import logging

import pandas as pd

from common.errors import EmptyDataError
from ingestion.schema import infer_schema

logger = logging.getLogger(__name__)

STAT_COLUMNS = ["variable", "category_or_stat", "value"]
COMPARE_COLUMNS = ["variable", "category_or_stat", "value_sim", "value_adult"]


@dataclass(frozen=True)
class CohortStats:
    """Long table of per-variable summaries.

    Categorical variables contribute one ``count`` and one ``rate`` row per
    category; continuous variables contribute ``mean``, ``q25`` and ``q75``.
    """

    table: pd.DataFrame
    n_rows: int

    def value(self, variable, key):
        hit = self.table[(self.table["variable"] == variable) & (self.table["category_or_stat"] == key)]
        if hit.empty:
            raise KeyError((variable, key))
        return float(hit["value"].iloc[0])

    def to_csv(self, path):
        self.table.to_csv(path, index=False)


def cohort_stats(frame, schema=None):
    """Summarize each variable of a cohort.

    Args:
        frame: One row per subject
        schema: Optional iterable of VariableSchema; inferred from dtypes when omitted

    Returns:
        CohortStats
    """
    if len(frame) == 0:
        raise EmptyDataError("cohort")

    schema = list(schema) if schema is not None else infer_schema(frame)
    rows = []
    n = len(frame)
    for variable in schema:
        if variable.name not in frame.columns:
            continue
        column = frame[variable.name]
        if variable.is_categorical:
            counts = column.value_counts()
            labels = list(variable.categories) + [c for c in counts.index if c not in variable.categories]
            for label in labels:
                count = int(counts.get(label, 0))
                rows.append((variable.name, f"{label}:count", float(count)))
                rows.append((variable.name, f"{label}:rate", count / n))
        else:
            values = column.astype(float)
            rows.append((variable.name, "mean", float(values.mean())))
            rows.append((variable.name, "q25", float(values.quantile(0.25))))
            rows.append((variable.name, "q75", float(values.quantile(0.75))))

    return CohortStats(table=pd.DataFrame(rows, columns=STAT_COLUMNS), n_rows=n)


def compare_cohorts(simulated, adult):
    """Align the summaries of a simulated cohort with those of the Adult data.

    Rows present on one side only carry NaN on the other.
    """
    merged = simulated.table.merge(
        adult.table,
        on=["variable", "category_or_stat"],
        how="outer",
        suffixes=("_sim", "_adult"),
        sort=False,
    )
    logger.debug("Compared %d summary rows", len(merged))
    return merged.loc[:, COMPARE_COLUMNS]
