"""Exception hierarchy shared by the shuffle, planner and CLI."""

from __future__ import annotations


class ShuffleFailure(Exception):
    """A run of the shuffle aborted. Carries the exit code the CLI reports."""

    exit_code = 1
    cause = "failure"

    def __init__(self, message: str, **details: int) -> None:
        super().__init__(message)
        self.details = details


class StashOverflow(ShuffleFailure):
    exit_code = 10
    cause = "stash_overflow"


class DrainFailure(ShuffleFailure):
    exit_code = 11
    cause = "drain_failure"


class QueueOverflow(ShuffleFailure):
    exit_code = 12
    cause = "queue_overflow"


class QueueUnderflow(ShuffleFailure):
    exit_code = 13
    cause = "queue_underflow"


class IntegrityError(ShuffleFailure):
    """Authenticated decryption rejected a ciphertext."""

    exit_code = 20
    cause = "integrity"


class ParameterError(ValueError):
    """Parameters are malformed (not merely outside a bound's side conditions)."""


class ConditionViolated(ValueError):
    """A closed-form bound was requested outside its side conditions."""

    def __init__(self, names: list[str]) -> None:
        super().__init__("side conditions violated: " + ", ".join(names))
        self.names = names


class NoRoot(ArithmeticError):
    pass


class NumericError(ArithmeticError):
    """Probability mass stopped adding up during an exact computation."""
