"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
DivergenceError -> 3, OSError -> 4.
"""


class ValidationError(ValueError):
    """Bad input: violated precondition, malformed file, inconsistent config."""


class WavFormatError(ValidationError):
    """WAV file exists but has an unsupported or malformed format."""


class WeightFileError(ValidationError):
    """Weight file is corrupt, truncated, or inconsistent with its manifest."""


class DivergenceError(ArithmeticError):
    """Non-finite value produced during optimization or inference."""


class StreamClosedError(ValidationError):
    """Operation on a stream that was already flushed."""
