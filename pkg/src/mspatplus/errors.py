"""Exception types.

Input and configuration problems derive from :class:`ValidationError` (also a
``ValueError``); numerical breakdowns derive from :class:`NumericalError`.
The CLI maps the two families to exit codes 2 and 3.
"""


class MSpatPlusError(Exception):
    pass


class ValidationError(MSpatPlusError, ValueError):
    pass


class NumericalError(MSpatPlusError, ArithmeticError):
    pass


# graph
class IndexOutOfRange(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


# linear algebra / shapes
class DimensionMismatch(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class MultipleZeroEigenvalues(ValidationError):
    pass


class NotPD(ValidationError):
    pass


class SingularM(ValidationError):
    pass


# spectral split
class KOutOfRange(ValidationError):
    pass


class FractionTooLarge(ValidationError):
    pass


# priors
class RhoOutOfRange(ValidationError):
    pass


class LambdaOutOfRange(ValidationError):
    pass


class ConstraintViolated(ValidationError):
    pass


class NonPositiveDiagonal(ValidationError):
    pass


# data
class InvalidCounts(ValidationError):
    pass


class NegativeCount(InvalidCounts):
    pass


class NonPositiveExpected(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class UnknownAreaId(ValidationError):
    pass


class ConstantVector(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooFewDraws(ValidationError):
    pass


# simulation
class TargetNotPD(ValidationError):
    pass


class DegenerateX1(ValidationError):
    pass


class InfeasibleTargets(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# numerics
class NonFinitePredictor(NumericalError):
    pass


class NonFiniteTarget(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass
