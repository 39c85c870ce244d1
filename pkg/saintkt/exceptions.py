class SaintError(Exception):
    """
    Base class for errors raised by the :mod:`saintkt` package.
    """


class ValidationError(SaintError, ValueError):
    """
    Raised when an argument, record or value is outside of its valid range.
    """


class ShapeError(ValidationError):
    """
    Raised when tensor dimensions do not line up.
    """


class WindowError(ValidationError):
    """
    Raised when a sequence is longer than the configured window.
    """


class ConfigError(ValidationError):
    """
    Raised when a configuration file or value is invalid.
    """

    def __init__(self, message, key=None):
        super(ConfigError, self).__init__(message)
        self._key = key

    @property
    def key(self):
        """
        Name of the offending configuration key (`None` if not key specific)

        :rtype: str
        """
        return self._key


class CompatibilityError(ValidationError):
    """
    Raised when a checkpoint cannot be applied to a dataset.
    """


class UndefinedMetricError(ValidationError):
    """
    Raised when a metric is undefined for the supplied labels.
    """


class ParseError(ValidationError):
    """
    Raised when an interaction log row cannot be parsed.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = "Line {}: {}".format(line_number, message)
        super(ParseError, self).__init__(message)
        self._line_number = line_number

    @property
    def line_number(self):
        """
        One-based line number of the offending row in the source file, the
        header being line 1.

        :rtype: int
        """
        return self._line_number


class StateError(SaintError, RuntimeError):
    """
    Raised when an operation is invoked in an invalid state.
    """


class NumericalError(SaintError, ArithmeticError):
    """
    Raised when a NaN or infinite value shows up in a computation.
    """


class TrainingDivergedError(NumericalError):
    """
    Raised when training produces a non-finite loss or gradient. Carries the
    last good checkpoint and the metric history logged before the failure.
    """

    def __init__(self, message, checkpoint=None, history=None):
        super(TrainingDivergedError, self).__init__(message)
        self._checkpoint = checkpoint
        self._history = list(history or [])

    @property
    def checkpoint(self):
        """
        The last good checkpoint

        :rtype: saintkt.checkpoint.Checkpoint
        """
        return self._checkpoint

    @property
    def history(self):
        """
        Metric history up to the failure

        :rtype: list
        """
        return self._history
