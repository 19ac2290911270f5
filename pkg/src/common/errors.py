"""Exception hierarchy shared by every IncomeSCM module.

The CLI maps these to exit codes: configuration and graph problems exit 2,
data and report I/O problems exit 3, numeric failures exit 4.
"""


class IncomeScmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IncomeScmError, ValueError):
    """The simulator or benchmark configuration is invalid."""


class DataError(IncomeScmError, ValueError):
    """Input data is missing, malformed or outside the declared schema."""


class MissingFileError(DataError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"input file not found: {path}")
        self.path = path


class EmptyDataError(DataError):
    def __init__(self, source="input"):
        super().__init__(f"no records in {source}")
        self.source = source


class ColumnCountError(DataError):
    def __init__(self, source, record, expected, found):
        super().__init__(
            f"column-count mismatch in {source} at record {record}: "
            f"expected {expected}, found {found}"
        )
        self.source = source
        self.record = record
        self.expected = expected
        self.found = found


class NumericFieldError(DataError):
    def __init__(self, source, record, column, value):
        super().__init__(
            f"unparseable numeric field in {source} at record {record}, "
            f"column '{column}': {value!r}"
        )
        self.source = source
        self.record = record
        self.column = column
        self.value = value


class UnknownCategoryError(DataError):
    def __init__(self, variable, label):
        super().__init__(f"unseen category {label!r} for variable '{variable}'")
        self.variable = variable
        self.label = label


class MissingFieldError(DataError, KeyError):
    def __init__(self, field):
        super().__init__(f"missing field '{field}'")
        self.field = field

    def __str__(self):
        return self.args[0]


class GraphError(IncomeScmError, ValueError):
    """The causal graph specification or query is invalid."""


class UnknownParentError(GraphError):
    def __init__(self, child, parent, layer):
        super().__init__(f"'{child}' lists unknown parent '{parent}' in the {layer} layer")
        self.child = child
        self.parent = parent
        self.layer = layer


class CycleError(GraphError):
    def __init__(self, layer, cycle):
        path = " -> ".join(str(u) for u, _ in cycle) + f" -> {cycle[0][0]}"
        super().__init__(f"cycle detected in the {layer} layer: {path}")
        self.layer = layer
        self.cycle = cycle


class NumericError(IncomeScmError, ArithmeticError):
    """A numeric routine cannot produce a meaningful result."""


class ReportError(IncomeScmError, OSError):
    """A report or export destination cannot be written."""
