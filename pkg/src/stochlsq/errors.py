"""Exception types shared across the package."""

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class RankDeficientError(np.linalg.LinAlgError):
    """A matrix that must have full column rank does not (within tolerance)."""


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing key)."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class NotTrainedError(RuntimeError):
    """An ELM model was used for prediction before output weights were fit."""
