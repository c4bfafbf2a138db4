from __future__ import annotations


class FlipUpliftError(Exception):
    """Base class for every error raised by the package."""


class DatasetError(FlipUpliftError, ValueError):
    pass


class IngestionError(DatasetError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class SummaryError(DatasetError):
    pass


class DomainError(FlipUpliftError, ValueError):
    pass


class InputError(FlipUpliftError, ValueError):
    pass


class DegenerateFitError(FlipUpliftError):
    pass


class FlipRefusalError(FlipUpliftError):
    pass


class ConfigError(FlipUpliftError, ValueError):
    pass
