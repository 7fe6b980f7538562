"""Exception hierarchy shared by all modules."""


class BVSError(Exception):
    """Base class for every error raised by this package."""


class DataError(BVSError):
    """Input data could not be turned into a valid dataset."""


class SchemaError(DataError):
    """A column required by the schema is missing or ambiguous."""


class ParseError(DataError):
    """A cell or formula could not be parsed."""


class DataValidationError(DataError, ValueError):
    """Parsed values violate a dataset invariant."""


class NumericalError(BVSError, ArithmeticError):
    """A statistic is undefined for the given data (e.g. a zero ZMS)."""
