"""Exception types shared across the package."""

from __future__ import annotations


class SingularDesignError(ArithmeticError):
    """Regression design is rank deficient on the observed points."""


class NoInteriorExtremumError(ValueError):
    """The estimated trend has no interior local extremum of the requested kind."""


class ReplicateError(RuntimeError):
    """A bootstrap replicate failed; carries the replicate id."""

    def __init__(self, replicate_id: int, message: str):
        super().__init__(f"replicate {replicate_id}: {message}")
        self.replicate_id = replicate_id
