"""Exception types shared across the package."""


class ObjEraseError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ObjEraseError, ValueError):
    """Raised when numeric or image inputs violate a documented precondition."""


class ConfigError(ObjEraseError, ValueError):
    """Raised when a run configuration is inconsistent or incomplete."""


class BackendError(ObjEraseError, RuntimeError):
    """Raised when a diffusion backend fails or is misused."""
