"""Exception types shared across the package.

Plain ``ValueError`` is used for bad call arguments; the classes here cover
failures that callers (and the CLI exit-code mapping) need to tell apart.
"""


class DataFormatError(Exception):
    """Input data could not be parsed or violates format constraints."""


class DegenerateDataError(DataFormatError):
    """Data is structurally valid but unusable (e.g. constant series)."""


class ResourceError(RuntimeError):
    """A requested computation exceeds a configured resource budget."""


class DegeneratePredictionError(RuntimeError):
    """The circuit moved all amplitude off the queried context.

    Carries the context-preservation probability mass that was observed so
    callers can report how badly the context was disturbed.
    """

    def __init__(self, message: str, preservation_mass: float = 0.0):
        super().__init__(message)
        self.preservation_mass = preservation_mass
