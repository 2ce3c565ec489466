"""Exception types shared across the package.

Every failure mode that callers are expected to handle gets its own class so
that tests and the CLI can distinguish bad usage (exit code 2) from domain
failures such as a diverging rollout (exit code 1).
"""

from __future__ import annotations


class QGBenchError(Exception):
    """Base class for all package-specific errors."""


class NotPsd(QGBenchError):
    """A matrix required to be positive semidefinite is not."""


class NotSpd(QGBenchError):
    """A matrix required to be symmetric positive definite is not."""


class NonFinite(QGBenchError):
    """A NaN or infinity appeared where finite values are required."""


class IndexOutOfRange(QGBenchError):
    """A coordinate index does not fit the stated dimension."""


class ShapeMismatch(QGBenchError):
    """An array argument has the wrong shape."""


class ZeroDirectionField(QGBenchError):
    """Square-root drift direction vanished at a state with positive energy."""


class SamplingExhausted(QGBenchError):
    """Parameter sampling could not produce a feasible draw within budget."""


class RetryBudgetExhausted(QGBenchError):
    """A generator slot failed validation more times than the retry budget."""


class Unreachable(QGBenchError):
    """Instability tuning cannot reach the requested spectral radius."""


class EmptyGrid(QGBenchError):
    """A validation grid with no points was supplied."""


class InvalidHorizon(QGBenchError):
    """A rollout or evaluation horizon must be a positive integer."""


class IoFailure(QGBenchError):
    """A file could not be read or written."""


class SchemaVersionMismatch(QGBenchError):
    """A fixture file declares an unsupported format version."""


class ChecksumMismatch(QGBenchError):
    """A fixture file is corrupt: stored and recomputed checksums differ."""


class PolicyFailure(QGBenchError):
    """An external policy process broke the wire protocol or timed out."""


class LengthMismatch(QGBenchError):
    """Paired sequences have incompatible lengths."""


class EmptyInput(QGBenchError):
    """An aggregate was requested over an empty collection."""
