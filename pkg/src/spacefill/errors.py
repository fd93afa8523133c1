"""Exception types shared across the package."""


class SpacefillError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SpacefillError):
    """Invalid parameters, specs, or unsupported option combinations."""


class SamplingError(SpacefillError):
    """Rejection sampling or volume estimation failed."""


class MembershipError(SpacefillError):
    """An external indicator process crashed or broke the line protocol."""


class ValidationError(SpacefillError):
    """A design file or point set violates its domain or format contract."""


class FitError(SpacefillError):
    """Kernel system factorization failed even after nugget escalation."""
