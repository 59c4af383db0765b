"""Exception types shared across the package."""


class HighwayRLError(Exception):
    """Base class for all package errors."""


class DeterminismViolation(HighwayRLError):
    """Two distinct outcomes were observed for one (state, action) pair.

    Carries the conflicting pair so callers can report which transition
    broke the deterministic-environment assumption.
    """

    def __init__(self, state, action, first, second):
        self.state = state
        self.action = action
        self.first = first
        self.second = second
        super().__init__(
            f"deterministic contract broken at (state={state:#x}, action={action}): "
            f"saw {first!r} then {second!r}"
        )


class NotInterior(HighwayRLError):
    """A split was requested at a state that is not interior to the highway."""


class KeyMismatch(HighwayRLError):
    """Two value maps that must share a key set do not."""


class DimensionMismatch(HighwayRLError):
    """Vector or matrix shapes are incompatible."""


class MissingArtifact(HighwayRLError):
    """A required serialized artifact was not found on disk."""
