"""Exception hierarchy for the newsstyle pipeline"""


class NewsStyleError(Exception):
    """Base class for every pipeline error"""


class DataValidationError(NewsStyleError, ValueError):
    """Input data or arguments violate a precondition (CLI exit code 2)"""


class ModelFileError(DataValidationError):
    """Model file cannot be used"""


class ModelVersionError(ModelFileError):
    """Model file written with an unsupported schema version"""


class ModelChecksumError(ModelFileError):
    """Model file truncated, corrupted or tampered with"""


class NumericalError(NewsStyleError, ArithmeticError):
    """A statistic or optimizer could not produce a finite answer (CLI exit code 3)"""
