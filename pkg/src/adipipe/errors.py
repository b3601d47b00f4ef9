"""Exception taxonomy; the CLI maps each class to a distinct exit code."""


class ConfigError(ValueError):
    """Bad flags, config files, or hyperparameter values (exit code 2)."""


class DataError(ValueError):
    """Bad or missing inputs: files, manifests, dimensions (exit code 3)."""


class NumericError(ArithmeticError):
    """Numerical failure: non-finite values, degenerate problems (exit code 4)."""
