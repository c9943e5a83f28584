"""Exception types shared across the package."""


class ShimsenseError(Exception):
    """Base class for all shimsense errors."""


class ParameterError(ShimsenseError, ValueError):
    """An argument or configuration value violates a documented precondition."""


class NumericalError(ShimsenseError):
    """An iterative numerical routine failed to converge within its budget."""


class IngestionError(ShimsenseError):
    """Input data could not be assembled into a valid dataset."""


class MissingSensorError(ShimsenseError):
    """A prediction request lacks measurements at required sensor locations."""

    def __init__(self, message, indices=(), location_ids=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)
        self.location_ids = tuple(location_ids)
