"""Exception types shared across the package."""


class WorkqedError(Exception):
    """Base class for all package-specific errors."""


class NumericalGuardError(WorkqedError):
    """A numerical health check failed (truncation leakage, unitarity drift).

    Runs that raise this must be considered invalid rather than silently
    renormalized; the CLI maps it to exit code 3.
    """


class GuardLevelError(NumericalGuardError):
    """Population leaked into the guard (top) Fock levels beyond tolerance."""


class UnitarityError(NumericalGuardError):
    """Propagator unitarity drifted beyond the abort threshold."""


class ConfigError(WorkqedError):
    """Invalid experiment configuration; the CLI maps it to exit code 2."""
