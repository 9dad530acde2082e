"""Exceptions shared across modules."""


class GuardError(ValueError):
    """Requested size exceeds an exponential-cost guard."""
