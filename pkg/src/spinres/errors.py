"""Exception types shared across the package."""


class SpinresError(Exception):
    """Base class for package errors."""


class GeometryError(SpinresError):
    """Invalid grid, material, or region configuration."""


class ConfigError(SpinresError):
    """Config file syntax or validation problem."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StabilityError(SpinresError):
    """Integrator step exceeds the exchange-mode stability bound."""


class IntegrationDivergedError(SpinresError):
    """Non-finite state encountered during time integration."""

    def __init__(self, step):
        super().__init__(f"non-finite spin state at macro step {step}")
        self.step = step
