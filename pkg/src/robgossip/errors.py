"""Exception types raised across the simulator."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class EmptyHistoryError(SimulationError):
    """A node has no candidate peer other than itself."""


class DimensionMismatch(SimulationError):
    pass


class NonFiniteModel(SimulationError):
    pass


class ThresholdExceedsMass(SimulationError):
    """The trimming threshold removes every input."""


class InsufficientData(SimulationError):
    pass


class MalformedFile(SimulationError):
    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        super().__init__(f"{self.path}: {reason} (byte offset {offset})")


class ConfigError(SimulationError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid config field {field!r}: {reason}")


class RoundError(SimulationError):
    """Wraps any failure inside a round with the round number."""

    def __init__(self, round_, cause):
        self.round = round_
        self.cause = cause
        super().__init__(f"round {round_}: {type(cause).__name__}: {cause}")
