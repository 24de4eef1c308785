"""Exception types shared across the package."""


class MatsenseError(Exception):
    """Base class for errors raised by this package."""


class RankError(MatsenseError):
    """Requested rank exceeds what the operand supports."""


class NumericError(MatsenseError):
    """Non-finite values or a numerically impossible request."""


class IndefiniteCostError(MatsenseError):
    """SDP cost matrix is not positive definite.

    Carries the offending eigenvalue in ``eigenvalue``.
    """

    def __init__(self, eigenvalue):
        self.eigenvalue = eigenvalue
        super().__init__(
            "cost matrix is not positive definite: "
            "smallest eigenvalue %r" % (eigenvalue,)
        )


class GramFactorizationError(MatsenseError):
    """Cholesky factorization of the regularized Gram matrix failed."""


class InsufficientDataError(MatsenseError):
    """Too few usable points for the requested estimate."""
