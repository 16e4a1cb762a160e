"""Exception hierarchy shared by all modules."""


class OptoJosephsonError(Exception):
    """Base class for errors raised by this package."""


class DomainError(OptoJosephsonError, ValueError):
    """An input lies outside the admissible domain (non-finite, |z| > q, ...)."""


class UnsupportedConfigurationError(OptoJosephsonError, ValueError):
    pass


class IntegrationError(OptoJosephsonError, RuntimeError):
    """Integration stopped early; ``partial`` holds what was computed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StiffnessError(IntegrationError):
    """Step size fell below the underflow threshold."""


class DivergenceError(IntegrationError):
    """The state became non-finite."""


class ConvergenceError(OptoJosephsonError, RuntimeError):
    """Newton refinement failed; carries the last iterate and its residual."""

    def __init__(self, message, last_iterate=None, residual=float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class EigensolverError(OptoJosephsonError, RuntimeError):
    pass


class SpecHashMismatch(OptoJosephsonError, ValueError):
    """A checkpoint was written for a different sweep specification."""
