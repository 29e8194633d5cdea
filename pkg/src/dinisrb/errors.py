"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """Argument outside the domain of a function (e.g. t > t_max)."""


class ValidationError(ValueError):
    """Malformed input: bad config, wrong shapes, inconsistent data."""


class NonDiniError(ValueError):
    """A modulus failed the Dini summability test where one was required."""


class TransversalityError(ValueError):
    """Subspace is not transverse to the stable factor of the reference frame."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its cap without meeting tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class BowenBallError(ValueError):
    """Point pair violates a Bowen-ball precondition."""


class CodingMismatchError(ValueError):
    """Supplied Markov coding is inconsistent with the dynamics."""
