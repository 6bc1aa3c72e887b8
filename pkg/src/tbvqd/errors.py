"""Exception hierarchy.

Everything raised deliberately by this package derives from ``TbvqdError``.
The CLI maps ``ModelParseError``/``ModelValidationError`` (bad input) to exit
code 2 and the computational failures to exit code 1.
"""


class TbvqdError(Exception):
    """Base class for all package errors."""


class ModelParseError(TbvqdError):
    """Model document is not syntactically valid or violates the schema."""


class ModelValidationError(TbvqdError):
    """Model document parsed but the model itself is inconsistent."""


class CircuitError(TbvqdError):
    """Malformed circuit or gate application (bad targets, wrong size)."""


class ProtocolError(TbvqdError):
    """Measurement-protocol failure (leakage, missing correlator, bad pair)."""


class OptimizationError(TbvqdError):
    """Variational optimization could not produce a usable result."""


class UsageError(TbvqdError):
    """Bad command-line arguments or run configuration."""
