"""Exception types shared across the package.

The split between configuration and data errors mirrors the CLI exit
codes: 1 for configuration problems, 2 for bad input data, 3 for
anything that fails at runtime.
"""


class ConfigError(ValueError):
    """A configuration document or parameter set is invalid."""


class DataError(ValueError):
    """An input dataset violates its contract."""


class SchemaMismatchError(DataError):
    """CSV header does not match the declared feature schema."""


class ParseError(DataError):
    """One or more rows could not be parsed against the schema."""

    def __init__(self, message, bad_rows=None):
        super().__init__(message)
        self.bad_rows = list(bad_rows) if bad_rows is not None else []


class PredictorError(RuntimeError):
    """An external or wrapped predictor failed while serving queries."""

    def __init__(self, message, row_index=None):
        super().__init__(message)
        self.row_index = row_index
