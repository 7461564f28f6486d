"""Exception taxonomy shared by all engine modules.

The CLI maps these onto exit codes: usage/config/format/validation
problems exit 2, numeric failures (NaN/Inf anywhere) exit 3.
"""


class NarvidError(Exception):
    """Base class for all engine errors."""


class NumericError(NarvidError):
    """A value left the finite-float domain (NaN or Inf)."""


class ShapeError(NarvidError):
    """Operands have incompatible shapes."""


class ConfigError(NarvidError):
    """A hyperparameter or structural setting is out of range."""


class UsageError(NarvidError):
    """An API was called in a way its contract forbids."""


class FormatError(NarvidError):
    """A file does not carry the expected magic/version."""


class ValidationError(NarvidError):
    """Loaded data violates a documented invariant."""


class CorruptionError(NarvidError):
    """A file is structurally damaged (truncated or inconsistent)."""
