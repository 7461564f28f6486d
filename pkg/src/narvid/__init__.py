"""Desk-scale text-video retrieval engine over precomputed embeddings."""

from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    NarvidError,
    NumericError,
    ShapeError,
    UsageError,
    ValidationError,
)

__all__ = [
    "ConfigError",
    "CorruptionError",
    "FormatError",
    "NarvidError",
    "NumericError",
    "ShapeError",
    "UsageError",
    "ValidationError",
]

__version__ = "0.1.0"
