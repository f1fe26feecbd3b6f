"""Exception hierarchy shared by every module."""


class HSIRNNError(Exception):
    """Base class for all library errors."""


class DimensionError(HSIRNNError, ValueError):
    """Tensor extents disagree with what an operation expects."""


class ArgumentError(HSIRNNError, ValueError):
    pass


class ConfigurationError(HSIRNNError, ValueError):
    """An architecture or training configuration is inconsistent."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class StateError(HSIRNNError, RuntimeError):
    pass


class FormatError(HSIRNNError, ValueError):
    """A file on disk is malformed. ``offset`` is the byte position, if known."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DataError(HSIRNNError, ValueError):
    pass
