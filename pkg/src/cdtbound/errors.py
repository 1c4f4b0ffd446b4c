class CdtError(Exception):
    """Base class for all package errors."""


class ParseError(CdtError):
    """Instance file could not be decoded."""


class ValidationError(CdtError):
    """Instance data violates a structural requirement (shape, symmetry, definiteness)."""


class AssumptionError(CdtError):
    """The ellipsoid constraint has no interior point inside the unit ball."""


class NumericalError(CdtError):
    """A numerical routine failed to deliver a usable result."""
