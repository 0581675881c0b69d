"""Shared exception types, mapped to CLI exit codes by the front end."""


class ValidationError(ValueError):
    """A mathematical validation failed (signature, Walker constraints, shapes)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (step underflow, singular linear solve)."""
