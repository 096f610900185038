"""Exception hierarchy. Each class carries the exit status the CLI maps it to."""


class IsmdpError(Exception):
    """Base class for all errors raised by ismdp."""

    exit_code = 1


class ConfigError(IsmdpError):
    """The run configuration is malformed or references invalid parameters."""

    exit_code = 2


class DomainError(IsmdpError, ValueError):
    """An argument lies outside the domain of the operation (e.g. p not in (0, 1))."""

    exit_code = 2


class InfeasibleSchemeError(IsmdpError):
    """The sampling scheme fails the feasibility audit and no override was given."""

    exit_code = 3


class SupportError(IsmdpError):
    """The nominal law has mass where the sampling law has none."""

    exit_code = 3


class NumericalError(IsmdpError):
    """A numeric evaluation failed or produced a non-finite value."""

    exit_code = 4


class DivergentIntegralError(NumericalError):
    """An integral required by a rate quantity is infinite."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ZeroVarianceError(NumericalError):
    """A rate was requested for a quantity with zero asymptotic variance."""


class DensityError(NumericalError):
    """The density vanishes at a quantile where a positive density is required."""


class NonPositiveDenominatorError(NumericalError):
    """A closed-form variational constant has a non-positive denominator."""


class MassDeficiencyError(NumericalError):
    """The weighted empirical measure has total mass not exceeding the level p."""


class TruthUnavailableError(NumericalError):
    """No analytic value exists for the requested target under the nominal law."""
