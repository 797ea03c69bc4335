"""Exception types shared across the package."""


class TopnetError(Exception):
    """Base class for all package errors."""


class MalformedRowError(TopnetError):
    """A CSV row failed validation (bad field, NaN, negative volume...)."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NonMonotonicTimestampError(TopnetError):
    """A tick timestamp went backwards."""

    def __init__(self, line: int):
        self.line = line
        super().__init__(f"line {line}: timestamp decreases")


class EmptyInputError(TopnetError):
    """No ticks / bars to work with."""


class SeriesTooShortError(TopnetError):
    """Input series shorter than the operation requires."""


class InvalidScheduleError(TopnetError):
    """Window schedule parameters violate the validity clause."""


class WindowTooSmallError(TopnetError):
    """Regression window shorter than order + 2."""


class DegenerateSystemError(TopnetError):
    """Least-squares system has no usable solution (non-finite input or
    numerically singular normal matrix). Never silently regularized."""


class IndexOutOfRangeError(TopnetError):
    """Slice index outside the series extent."""


class EmptyViewError(TopnetError):
    """View window contains no drawable columns."""


class SpanTooShortError(TopnetError):
    """Figure too short to extrapolate."""


class EmptyFigureSetError(TopnetError):
    """Topology overlap needs at least one figure on each side."""

    def __init__(self, side: str):
        self.side = side
        super().__init__(f"no figures on side {side!r}")


class InsufficientHistoryError(TopnetError):
    """Instrument lacks the bars a protocol needs."""

    def __init__(self, instrument: str, detail: str = ""):
        self.instrument = instrument
        super().__init__(f"{instrument}: insufficient history" + (f" ({detail})" if detail else ""))


class ConfigError(TopnetError):
    """Bad run configuration."""


class DataError(TopnetError):
    """Referenced data missing or unreadable."""
