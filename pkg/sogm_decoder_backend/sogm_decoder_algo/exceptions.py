"""
Exception hierarchy shared by the mapping, segmentation, decoding and
experiment modules.

Every exception carries an ``exit_code`` so management commands can map a
failure to the process exit status:

- 2: invalid configuration or parameters
- 3: missing input artifact
- 4: internal numerical failure
"""


class SogmError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidParams(SogmError, ValueError):
    """A parameter or configuration value is inconsistent or out of range."""

    exit_code = 2


class UnknownLayer(SogmError, KeyError):
    """A layer name does not exist in the semantic grid."""

    exit_code = 2

    def __str__(self):
        # KeyError quotes its argument, keep the plain message
        return str(self.args[0]) if self.args else ""


class IndexOutOfBounds(SogmError, IndexError):
    """A grid index lies outside the grid."""

    exit_code = 2


class DimensionError(SogmError, ValueError):
    """Observation and model dimensions do not match."""

    exit_code = 2


class EmptySequence(SogmError, ValueError):
    """An observation sequence (or list of sequences) is empty."""

    exit_code = 2


class UnknownClass(SogmError, KeyError):
    """A property class label is not part of the hierarchical model."""

    exit_code = 2

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NotFound(SogmError, FileNotFoundError):
    """An upstream artifact (dataset, model, predictions) is missing."""

    exit_code = 3


class NumericalFailure(SogmError, ArithmeticError):
    """A computation produced a non-finite or degenerate result."""

    exit_code = 4
