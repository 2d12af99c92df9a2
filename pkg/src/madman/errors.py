"""Exception types raised across the package."""


class MadmanError(Exception):
    """Base class for all package errors."""


class EmptyImage(MadmanError, ValueError):
    pass


class UnknownAttribute(MadmanError, KeyError):
    pass


class TooManyObjects(MadmanError, ValueError):
    """Raised for object counts outside 1..2."""


class UnknownToken(MadmanError, KeyError):
    pass


class RejectionBudgetExceeded(MadmanError, RuntimeError):
    pass


class ManifestMismatch(MadmanError):
    pass


class CorruptRecord(MadmanError):
    pass


class ShapeMismatch(MadmanError, ValueError):
    pass


class IdOutOfRange(MadmanError, ValueError):
    pass


class BatchTooSmall(MadmanError, ValueError):
    pass


class Divergence(MadmanError, RuntimeError):
    pass


class EmptyEvalSet(MadmanError, ValueError):
    pass


class AllSamplesFiltered(MadmanError):
    """Every record was dropped by the per-sample recognition filter."""


class InsufficientSeeds(MadmanError, ValueError):
    pass


class ConfigError(MadmanError, ValueError):
    """Invalid configuration; the message names the offending field."""
