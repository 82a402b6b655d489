"""Exception hierarchy shared across the package."""


class BigginsError(Exception):
    """Base class for all package-specific errors."""


class DomainError(BigginsError, ValueError):
    """A parameter lies outside the mathematical domain of the operation."""


class InfiniteVariance(BigginsError):
    """The requested variance does not exist (second transform diverges)."""


class PopulationCapExceeded(BigginsError, RuntimeError):
    """A generation grew past the configured hard population cap.

    The run aborts; populations are never subsampled or pruned because that
    would bias weighted sums and sup-weights.
    """


class InsufficientDepth(BigginsError, ValueError):
    """A trajectory is not deep enough for the requested tail proxy."""


class ExtinctTree(BigginsError):
    """An operation requiring a surviving generation got an extinct one."""


class DegenerateSample(BigginsError):
    """Too few usable entries to run a statistical comparison."""


class EmptySample(BigginsError, ValueError):
    """A test statistic was requested for an empty sample."""


class ZeroVariance(BigginsError, ValueError):
    """The variance series of a normalized sum vanishes."""


class DivergentThirdMoments(BigginsError):
    """A third-moment series failed to meet its tolerance within the cap."""


class RegimeMismatch(BigginsError, ValueError):
    """Arithmetic/non-arithmetic regime does not match the model metadata."""


class ParseError(BigginsError, ValueError):
    """A config file is syntactically invalid."""


class ValidationError(BigginsError, ValueError):
    """A parsed config violates an invariant."""


class TruncationWarning(UserWarning):
    """A truncated series still carries a non-negligible last term."""
