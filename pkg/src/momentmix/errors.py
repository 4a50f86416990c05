"""Exception types, grouped by how the CLI reports them.

InputError maps to exit code 3, NoMeaningfulSolutionError to 2 and
SolverError to 4; everything else is a plain failure.
"""


class MomentmixError(Exception):
    """Base class for package errors."""


class InputError(MomentmixError):
    """Malformed or inconsistent user input (files, keys, shapes)."""


class MissingMomentError(InputError):
    """A required moment key is absent from the table."""

    def __init__(self, key):
        self.key = tuple(key)
        super().__init__(f"missing required moment m_{self.key}")


class SolverError(MomentmixError):
    """Tracking or a linear stage failed (degenerate or non-generic data)."""


class NoMeaningfulSolutionError(MomentmixError):
    """The system was solved but no statistically meaningful solution exists."""
