"""Exception hierarchy shared by all modules; the CLI maps these to exit codes."""


class MvsimError(Exception):
    """Base class; ``stage`` and ``step`` are filled in by the driver when known."""

    stage: str | None = None
    step: int | None = None


class ShapeError(MvsimError, ValueError):
    """Fields that do not share type, layout or domain."""


class NonFiniteError(MvsimError, ValueError):
    """A field acquired NaN or infinite values."""


class ParameterError(MvsimError, ValueError):
    pass


class ConfigError(MvsimError, ValueError):
    pass


class PreconditionError(MvsimError, ValueError):
    pass


class SolverError(MvsimError, RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class VerificationError(MvsimError, AssertionError):
    pass
