"""Exception types shared across the library."""


class SqrtDiffError(Exception):
    """Base class for all library errors."""


class NonFinite(SqrtDiffError):
    """A coefficient closure returned NaN or infinity."""


class BallTouchesSingularity(SqrtDiffError):
    """The safety ball around the evaluation point meets the singular region."""


class MissingDerivatives(SqrtDiffError):
    """A derivative order was requested beyond the available closures."""


class MissingNorm(SqrtDiffError):
    """A norm table lacks an order required by a constant evaluation."""


class DegenerateTime(SqrtDiffError):
    """A strictly positive time was required."""


class SeriesNotConverged(SqrtDiffError):
    """Series truncation rule was not met within the term cap."""


class SchemeMismatch(SqrtDiffError):
    """Simulation scheme is incompatible with the coefficient family."""


class NonpositivePath(SqrtDiffError):
    """A path touched the positivity floor in a negative-moment functional."""


class EmptySample(SqrtDiffError):
    """An estimator received an empty sample."""


class NonpositiveSample(SqrtDiffError):
    """Log-scale estimation requires strictly positive samples."""


class NonHermitian(SqrtDiffError):
    """Characteristic-function values fail the conjugate-symmetry check."""


class NonpositiveDensity(SqrtDiffError):
    """A fit range contains nonpositive density values."""


class OutOfRegime(SqrtDiffError):
    """An asymptotic bound was evaluated outside its stated regime."""


class QuadratureFailure(SqrtDiffError):
    """Adaptive quadrature met a non-finite integrand."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class ConfigError(SqrtDiffError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Configuration file is not valid JSON."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    """Configuration parsed but violates the schema."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
