"""Exception types shared across the package."""


class TauDiffError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(TauDiffError, ValueError):
    """Input data failed structural or numeric validation."""


class InsufficientSamplesError(TauDiffError, ValueError):
    """A computation requires more sample rows than were provided."""


class KernelComplexityError(TauDiffError, ValueError):
    """An exact generic evaluation would be combinatorially infeasible."""


class DegenerateStatisticError(TauDiffError, ValueError):
    """A statistic is undefined for the given inputs (e.g. every entry
    of a test grid has a zero variance denominator)."""
