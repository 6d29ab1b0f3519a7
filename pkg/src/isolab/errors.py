"""Shared exception types."""

from __future__ import annotations

__all__ = ["AcceptanceFailure", "DegenerateRowError"]


class AcceptanceFailure(Exception):
    """A quantitative check that the package promises to uphold has failed.

    Raised by verification routines (moment checks, bound checks, monotone
    decay assertions). The command line maps this to exit code 2 so scripts
    can distinguish "the math check failed" from ordinary errors.
    """


class DegenerateRowError(ValueError):
    """A matrix row that must be normalized has zero norm.

    The row-normalizing BN variant divides each row by its norm and carries
    no epsilon, so a zero row is unrecoverable. Carries the offending row
    index and, when raised inside a network pass, the 1-based layer index.
    """

    def __init__(self, row: int, layer: int | None = None):
        self.row = row
        self.layer = layer
        where = f"layer {layer}, row {row}" if layer is not None else f"row {row}"
        super().__init__(f"degenerate row: zero norm at {where}")
