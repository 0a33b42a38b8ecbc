"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced (or was handed) NaN or Inf."""


class TapeError(RuntimeError):
    """Backward was requested on a graph that cannot be differentiated."""


class ConfigError(ValueError):
    """An experiment or network configuration is invalid."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""
