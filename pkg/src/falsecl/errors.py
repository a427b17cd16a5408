"""Shared exception types."""


class FalseclError(Exception):
    """Base class for package errors."""


class BadConfigError(FalseclError):
    """A configuration value is out of its allowed range."""


class ShapeMismatchError(FalseclError):
    """Array shapes are inconsistent with the requested operation."""


class ZeroRowError(FalseclError):
    """A row that must be normalized has (near-)zero norm."""


class FormatError(FalseclError):
    """A serialized artifact fails its magic/version/length checks."""
