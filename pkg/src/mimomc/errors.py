"""Exception types shared across the package."""


class MimomcError(Exception):
    """Base class for all mimomc errors."""


class NotAMember(MimomcError):
    """A symbol was expected to be an exact member of a constellation."""


class RankDeficient(MimomcError):
    """Channel matrix is (numerically) rank deficient."""


class DegeneratePivot(MimomcError):
    """A diagonal pivot used as a divisor is too small to trust."""


class DegenerateA(MimomcError):
    """The diagonal block of a punctured decomposition has a near-zero entry."""


class DimensionMismatch(MimomcError):
    """Vector/matrix dimensions are inconsistent."""


class IndexOutOfRange(MimomcError, IndexError):
    """Layer index outside 0..N-1."""


class NonPositiveSNR(MimomcError, ValueError):
    """SNR must be strictly positive in linear scale."""


class TooLarge(MimomcError):
    """Joint-hypothesis enumeration would exceed the lattice-size guard."""


class CacheMiss(MimomcError):
    """A distance-cache lookup failed; this indicates a pipeline bug."""


class EmptyBitClass(MimomcError):
    """A per-bit symbol class is empty; cannot happen for standard labelings."""


class ConfigError(MimomcError, ValueError):
    """Invalid experiment configuration."""


class NumericalFailure(MimomcError):
    """Too many decomposition failures during an experiment run."""
