"""Exception types.

ValueError subclasses signal malformed input or out-of-contract arguments;
ArithmeticError subclasses signal numerical failure in an otherwise valid
computation. The CLI maps the former to exit code 1 and the latter to 2.
"""


class DegenerateDenominatorError(ArithmeticError):
    """Sum of squared error characteristic functions is numerically zero."""


class ZeroDenominatorError(ArithmeticError):
    """The plain characteristic-function sum in the denominator vanishes."""


class NumericalIntegrationError(ArithmeticError):
    """An integrand evaluated to a non-finite value at a quadrature node."""


class IdentificationError(ArithmeticError):
    """The variance-scan could not find a usable frequency."""


class InfiniteVarianceError(ValueError):
    """Moment requested from a distribution without finite variance."""


class InsufficientReplicatesError(ValueError):
    """No subject carries two or more replicates."""


class UnsupportedKernelError(ValueError):
    """Operation requires a kernel with a finite even order."""
