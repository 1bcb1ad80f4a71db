"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, DivergenceError -> 3.
"""


class DataError(Exception):
    """Malformed or inconsistent input data."""


class CheckpointError(DataError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class DivergenceError(Exception):
    """Training loss became non-finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")
