"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An argument lies outside the operation's valid domain."""


class SchemaError(ValueError):
    """A keyed collection (views, parameters) does not match the expected key set."""


class AlignmentError(ValueError):
    """Views of one sequence disagree on the number of timesteps."""


class ConfigError(ValueError):
    """A configuration object fails validation."""


class DatasetError(ValueError):
    """A dataset file cannot be parsed or violates the data contract."""


class NonFiniteError(ValueError):
    """A forward operation produced NaN or Inf."""


class StaleTapeError(RuntimeError):
    """The tape was already consumed by a backward pass."""


class UndefinedCorrelationError(DomainError):
    """Pearson correlation is undefined because an input is constant."""
