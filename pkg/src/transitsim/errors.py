"""Exception types shared across the package."""


class TransitSimError(Exception):
    """Base class for all package errors."""


class PastEventError(TransitSimError):
    """An event was scheduled before the current simulation time."""


class BadBoundsError(TransitSimError):
    """Truncation bounds are empty or inverted."""


class ParseError(TransitSimError):
    """An input file is structurally malformed."""


class ValidationError(TransitSimError):
    """Loaded data violates a structural invariant."""


class UnknownStationError(TransitSimError):
    """A record references a station absent from the network."""


class NoPathError(TransitSimError):
    """No route exists between the requested stations."""


class EmptySourceError(TransitSimError):
    """A resampling operation was given an empty source."""


class InsufficientDataError(TransitSimError):
    """Too few (or degenerate) samples for the requested estimate."""


class DegenerateFitError(TransitSimError):
    """A fitted component collapsed below the resolvable scale."""


class MoreComponentsThanRoutesError(TransitSimError):
    """Mixture has more components than candidate routes to match."""


class ZeroVarianceError(TransitSimError):
    """A correlation was requested on a constant sample."""


class NonPositiveValueError(TransitSimError):
    """Log-domain fitting received a value <= 0."""


class IllegalTransitionError(TransitSimError):
    """An agent received an event that does not match its state."""


class TooFewPointsError(TransitSimError):
    """Not enough grid points for the requested analysis."""
