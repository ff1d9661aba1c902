"""Exception hierarchy. The CLI maps these onto exit codes."""


class GcnPruneError(Exception):
    pass


class ConfigError(GcnPruneError, ValueError):
    """Invalid parameter, unknown config key, or unsatisfiable request."""


class ShapeError(GcnPruneError, ValueError):
    """Operand shapes are incompatible."""


class ParseError(GcnPruneError, ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class ValidationError(GcnPruneError, ValueError):
    """Loaded data violates a structural invariant."""


class DegenerateInputError(GcnPruneError, ValueError):
    """Input too small or too uniform for the requested statistic."""


class TrainingError(GcnPruneError, RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch
