"""Adapter error types."""


class QgEnvError(Exception):
    """Base class for adapter failures."""


class BadFixture(QgEnvError):
    """The fixture (or companion dump) file is missing, damaged, or inconsistent."""


class ShapeMismatch(QgEnvError):
    """An array has the wrong dimensions for this fixture."""
