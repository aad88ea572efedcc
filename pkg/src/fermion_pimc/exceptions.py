"""Error hierarchy shared by every module of the package."""


class FermionPIMCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FermionPIMCError, ValueError):
    """Invalid or inconsistent input parameters."""


class DomainError(FermionPIMCError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularityError(FermionPIMCError, ArithmeticError):
    """A Coulomb distance fell below the singularity threshold."""


class NumericError(FermionPIMCError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class EstimationError(FermionPIMCError, RuntimeError):
    """A Monte Carlo run could not produce an estimate."""


class SignProblemError(EstimationError):
    """The denominator mean is statistically indistinguishable from zero."""


class PrecisionError(FermionPIMCError, ArithmeticError):
    """An iterative reference computation failed to converge."""


class UnsupportedConfigurationError(ConfigurationError):
    """A valid configuration that an operation deliberately refuses."""
