"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Invalid run or module configuration."""


class StateError(RuntimeError):
    """Operation called on an object in an unsuitable state (e.g. empty design)."""


class EvaluatorError(RuntimeError):
    """The limit-state evaluator could not be started or talked to."""
