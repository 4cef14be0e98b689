"""Exception types shared across the flexbid package."""


class FlexbidError(Exception):
    """Base class for all flexbid-specific errors."""


class ConfigError(FlexbidError):
    """Invalid experiment or CLI configuration."""


class MalformedRow(FlexbidError):
    """A CSV row that cannot be parsed or violates an ingestion invariant."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class OverlappingSessions(FlexbidError):
    """Two charging sessions of the same EV overlap in time."""

    def __init__(self, ev_id: str):
        super().__init__(f"overlapping sessions for EV {ev_id!r}")
        self.ev_id = ev_id


class NonMonotoneTimestamps(FlexbidError):
    """Session or reading timestamps are out of order."""

    def __init__(self, ev_id: str, detail: str = ""):
        msg = f"non-monotone timestamps for EV {ev_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.ev_id = ev_id


class EmptyInput(FlexbidError):
    """An operation that requires at least one element received none."""


class DayMismatch(FlexbidError):
    """Flexibility series for different days were combined."""


class HourMismatch(FlexbidError):
    """Bid, scenario set, or price records refer to different hours."""


class InsufficientTrainingDays(FlexbidError):
    """Fewer training days available than scenario samples requested."""

    def __init__(self, available: int, requested: int):
        super().__init__(
            f"requested {requested} scenario samples but only "
            f"{available} training days are available"
        )
        self.available = available
        self.requested = requested


class TooManyBundles(FlexbidError):
    """More bundles requested than EVs available."""


class ZeroFlexibilityDenominator(FlexbidError):
    """Utilized capacity is undefined because realized flexibility sums to zero."""


class Infeasible(FlexbidError):
    """A bid solver could not produce a feasible bid (should not occur)."""


class NonConvergence(FlexbidError):
    """An iterative solver exceeded its iteration cap."""


class IoError(FlexbidError):
    """A report file could not be written."""

    def __init__(self, path, cause=None):
        super().__init__(f"cannot write {path}" + (f": {cause}" if cause else ""))
        self.path = path
