"""Exception types shared across the library."""


class DeclnodeError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatchError(DeclnodeError, ValueError):
    """Operands have incompatible shapes."""


class NotPositiveDefiniteError(DeclnodeError, ArithmeticError):
    """A matrix required to be positive definite is not.

    Raised when a Cholesky pivot is non-positive.  For backward passes this
    signals a degenerate (or nearly degenerate) Hessian; retrying with a
    larger ``regularization`` usually resolves it.
    """


class NumericalUnderflowError(DeclnodeError, FloatingPointError):
    """Linear-domain Sinkhorn scalings under- or overflowed.

    Retry with ``log_domain=True`` (or leave auto-switching enabled).
    """


class NonFiniteError(DeclnodeError, FloatingPointError):
    """A probed function returned NaN or infinity."""


class RankDeficientConstraintsError(DeclnodeError, ValueError):
    """The constraint Jacobian is (numerically) rank deficient.

    Usually means redundant constraints were not removed before
    differentiating the solution map.
    """


class BenchConfigError(DeclnodeError, ValueError):
    """Invalid benchmark configuration."""
