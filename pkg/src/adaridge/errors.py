"""Exception hierarchy for adaridge.

Every error raised by the library derives from :class:`AdaRidgeError` so
callers can catch the whole family with one clause.  Names mirror the
failure they report; most carry a short human-readable message and, where
useful, the offending index.
"""


class AdaRidgeError(Exception):
    """Base class for all adaridge errors."""


class DimensionMismatch(AdaRidgeError):
    """Array shapes do not agree."""


class NonFiniteInput(AdaRidgeError):
    """An input array contains NaN or infinity."""


class ZeroNormColumn(AdaRidgeError):
    """A predictor column has zero Euclidean norm and cannot be scaled."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"predictor column {column} has zero norm")


class NonPositiveSigma2(AdaRidgeError):
    """A noise variance that must be strictly positive is not."""


class InfinitePrecision(AdaRidgeError):
    """A pruned coordinate (infinite prior precision) reached an operation
    that requires finite precisions; restrict to the active set first."""


class SingularSystem(AdaRidgeError):
    """A linear system that should be positive definite is singular."""


class DegenerateResidual(AdaRidgeError):
    """The residual sum of squares is exactly zero; the variance update
    would be degenerate."""


class ExactFit(AdaRidgeError):
    """The solver encountered a perfect interpolation and cannot continue."""


class EtaAtOlsBoundary(AdaRidgeError):
    """The precision update is undefined at or below eta = -1/2, where the
    procedure collapses to ordinary least squares."""


class NoInitializer(AdaRidgeError):
    """Neither least squares nor the ridge fallback produced a usable
    starting point."""


class ZeroCoordinate(AdaRidgeError):
    """An exactly-zero coefficient reached a step that divides by it;
    zeros must be pruned before stepping."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"coordinate {index} is exactly zero; prune it first")


class NonInteriorMode(AdaRidgeError):
    """The curvature matrix at the reported mode is not positive definite;
    the mode is not interior."""


class NonFiniteEvidence(AdaRidgeError):
    """An evidence computation produced NaN or infinity."""


class NonPositiveS2(AdaRidgeError):
    """The integrated-out residual quadratic form is not positive."""


class EmptyBox(AdaRidgeError):
    """The sampling hypercube has no volume."""


class AllZeroIntegrand(AdaRidgeError):
    """Every Monte-Carlo draw underflowed to zero; the estimate is
    meaningless."""


class EmptyInput(AdaRidgeError):
    """An operation that needs at least one value received none."""


class RankDeficient(AdaRidgeError):
    """The design matrix does not have full column rank."""


class NotPositiveDefinite(AdaRidgeError):
    """A covariance matrix failed its Cholesky factorization."""
