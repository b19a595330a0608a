"""Exception types shared across the package."""


class PollingError(Exception):
    """Base class for all package errors."""


class ConfigError(PollingError):
    """Structurally malformed configuration or distribution parameters."""


class DomainError(PollingError, ValueError):
    """Argument outside the mathematically valid domain of an operation."""


class SpectralFailure(PollingError):
    """Power iteration failed to converge to the dominant eigenpair."""


class SupercriticalityError(PollingError):
    """Dominant eigenvalue rho <= 1: the embedded process is not supercritical."""


class DegenerateConfigError(PollingError):
    """Monte Carlo procedure cannot make progress on this configuration."""


class ResourceLimitError(PollingError):
    """Simulation exceeded its event or session budget."""


class ConsistencyError(PollingError):
    """Internal consistency check failed (e.g. non-increasing fluid constants)."""
