"""Exception types shared across the toolkit."""


class LpswError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(LpswError, ValueError):
    """Invalid grid, parameter set or configuration file."""

    def __init__(self, message, violations=None):
        self.violations = list(violations or [])
        if self.violations and not message:
            message = "; ".join(self.violations)
        super().__init__(message)


class CoverageError(LpswError):
    """A field carries spectral mass outside the dyadic partition coverage."""


class PreconditionError(LpswError, ValueError):
    """Parameters fall outside the validity region of an estimate."""


class CFLError(LpswError):
    """Requested time step violates the advective CFL restriction."""

    def __init__(self, message, required_dt):
        super().__init__(message)
        self.required_dt = required_dt


class DivergenceError(LpswError):
    """The time integration produced non-finite values."""


class RegimeExitError(LpswError):
    """The height perturbation left the regime 1 + h >= 1/2."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
