"""Exception taxonomy shared by all modules.

Every failure mode the library reports deliberately gets its own class so
callers (and the CLI exit-code logic) can discriminate without string
matching.  All of them derive from :class:`HoldoutError`.
"""


class HoldoutError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HoldoutError):
    """Rejected configuration input (maps to CLI exit code 2)."""


class DimensionMismatchError(HoldoutError):
    """Operands have incompatible shapes or an index is out of range."""


class RangeError(HoldoutError, ValueError):
    """A numeric argument is outside its documented domain."""


class NonPrimitiveError(HoldoutError):
    """Kernel is not primitive (irreducible + aperiodic), so no unique
    stationary law / uniform ergodicity is available."""


class NumericalFailureError(HoldoutError):
    """A numeric routine produced a result outside its validated tolerance."""


class EigensolverFailureError(NumericalFailureError):
    """The symmetric eigensolver did not converge."""


class HorizonExceededError(HoldoutError):
    """An iterative search passed its step cap without reaching its target."""


class ZeroStationaryMassError(HoldoutError):
    """A stationary probability is numerically zero where positivity is required."""


class SizeOverflowError(HoldoutError):
    """A requested composite state space exceeds the configured cap."""


class EmptySegmentError(HoldoutError):
    """An empirical average was requested over zero samples."""


class DivisionGuardError(HoldoutError):
    """A closed-form denominator is too close to zero to evaluate."""


class NoSolutionError(HoldoutError):
    """A root-finding problem has no solution inside its bracket."""


class BinaryOnlyError(HoldoutError):
    """Operation is defined only for binary symbol spaces."""


class ZeroMarginError(HoldoutError):
    """The chain's conditional margin is numerically zero."""


class UnknownEventError(HoldoutError):
    """An event or check identifier is not registered."""


class KeyMismatchError(HoldoutError):
    """Two keyed collections that must align do not."""
