"""Exception hierarchy shared across the package."""


class CertNMPCError(Exception):
    """Base class for all errors raised by certnmpc."""


class ConfigError(CertNMPCError, ValueError):
    """Malformed or inconsistent configuration.

    ``field`` is a dotted path to the offending entry (e.g. ``"weights.W_u"``).
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidBoundsError(CertNMPCError, ValueError):
    pass


class IntegrationDivergedError(CertNMPCError, FloatingPointError):
    """RK4 integration produced non-finite values."""

    def __init__(self, message, stage=None):
        self.stage = stage
        if stage is not None:
            message = f"stage {stage}: {message}"
        super().__init__(message)


class SolverFailureError(CertNMPCError, RuntimeError):
    """The Newton backend could not produce a finite direction."""

    def __init__(self, message, iteration=None, stage=None):
        self.iteration = iteration
        self.stage = stage
        prefix = []
        if iteration is not None:
            prefix.append(f"iteration {iteration}")
        if stage is not None:
            prefix.append(f"stage {stage}")
        if prefix:
            message = ", ".join(prefix) + ": " + message
        super().__init__(message)


class CertifiedInvariantViolation(CertNMPCError, AssertionError):
    """An invariant guaranteed by the convergence analysis failed to hold.

    This always indicates a bug (or non-finite input data), never a
    legitimately hard problem instance.
    """
