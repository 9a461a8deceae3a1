"""Exception taxonomy shared across the package.

Two broad families matter for the command line front end: validation errors
(bad names, malformed input, dimension mismatches) and numerical failures
(integration breakdown, degenerate geometry, starved estimators).  They map
to distinct process exit codes there.
"""


class PesinLabError(Exception):
    """Base class for package errors."""


class ValidationError(PesinLabError):
    """Malformed user input: bad system descriptions, bad parameter values."""


class UnknownSystem(ValidationError):
    """A system name that is not in the builtin registry."""


class DimensionMismatch(ValidationError):
    """An operation received a field of the wrong dimension."""


class NumericalError(PesinLabError):
    """Base class for runtime numerical failures."""


class NonFiniteState(NumericalError):
    """The integrated state left the finite floating-point range."""


class StepUnderflow(NumericalError):
    """The adaptive integrator stalled before reaching the target time."""


class SingularPoint(NumericalError):
    """The vector field vanishes where a flow direction is required."""


class DegenerateSplitting(NumericalError):
    """Finite-time singular values coincide; no splitting direction exists."""


class NonPositiveCeiling(ValidationError):
    """A suspension ceiling that is not bounded below by a positive constant."""


class NotInvertible(ValidationError):
    """Backward evolution requested for a base map without an inverse."""


class InsufficientSamples(NumericalError):
    """Too few itinerary samples to estimate even depth-1 block entropy."""


class EmptyLevel(NumericalError):
    """No seed point could be projected onto the requested energy level."""


class CriticalLevel(NumericalError):
    """An energy level containing (or too close to) a critical point."""


class AllSamplesRejected(NumericalError):
    """Every Monte Carlo sample was rejected (singular orbits, drift, ...)."""
