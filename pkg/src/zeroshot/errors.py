"""Exception types shared across the package."""


class FormatError(ValueError):
    """Embedding file has a bad magic string or unsupported version."""


class CorruptionError(ValueError):
    """Embedding file payload is truncated or inconsistent with its header."""


class ValidationError(ValueError):
    """A data invariant is violated (duplicate ids, bad dimensions, ...)."""


class ReferentialIntegrityError(ValidationError):
    """Manifest references ids that are absent from a feature table."""

    def __init__(self, message, offenders):
        super().__init__(f"{message}: {sorted(offenders)}")
        self.offenders = sorted(offenders)


class ConfigError(ValueError):
    """Model architecture configuration is internally inconsistent."""


class NumericError(ArithmeticError):
    """Training or an update step produced non-finite values."""
