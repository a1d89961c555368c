"""Exception hierarchy.

Every error carries the process exit code the command line front end uses:
2 for invalid input, 3 for numerical failure, 4 for file-system problems.
"""


class SpatialMTRError(Exception):
    exit_code = 1


class ValidationError(SpatialMTRError, ValueError):
    exit_code = 2


class NumericalError(SpatialMTRError, ArithmeticError):
    exit_code = 3


class FileIOError(SpatialMTRError, OSError):
    exit_code = 4


# validation
class DimensionMismatch(ValidationError):
    pass


class OddPhenotypeCount(DimensionMismatch):
    pass


class SubjectCountMismatch(DimensionMismatch):
    pass


class NeighborhoodShapeMismatch(DimensionMismatch):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NonFiniteValue(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class NonSymmetricNeighborhood(ValidationError):
    pass


class ZeroRowSum(ValidationError):
    pass


class RhoOutOfRange(ValidationError):
    pass


class ConstantColumn(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class NonPositiveCStar(ValidationError):
    pass


class RankDeficientConfounders(ValidationError):
    pass


class AllZeroRidge(ValidationError):
    pass


class NonFiniteLogLik(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# numerical
class NonPositiveDefinite(NumericalError):
    pass


class DegenerateRow(NumericalError):
    pass


class DegreesOfFreedomTooSmall(NumericalError):
    pass


class SingularDesign(NumericalError):
    pass


class MaxIterExceeded(UserWarning):
    """Coordinate ascent stopped at max_iter before meeting the tolerance."""
