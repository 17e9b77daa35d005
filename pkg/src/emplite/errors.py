"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
integrity problems exit 3, internal numeric failures exit 4.
"""


class EmpliteError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EmpliteError):
    """Invalid option, hyperparameter, or flag combination."""


class ShapeError(EmpliteError):
    """Tensor shape, dimension, or rank mismatch."""


class DegenerateMaskError(EmpliteError):
    """A mask with no active positions where at least one is required."""


class DegenerateInputError(EmpliteError):
    """Empty input where at least one element is required."""


class OutOfRangeError(EmpliteError):
    """An index beyond the table it addresses (e.g. an unmapped word id)."""


class TrainingIntegrityError(EmpliteError):
    """Inconsistent training state: missing gradients, vocabulary mismatch."""


class NumericError(EmpliteError):
    """Non-finite values or other numeric breakdown during computation."""


class AlignmentError(EmpliteError):
    """Prediction and reference files that do not line up token-for-token."""


class ParseError(EmpliteError):
    """Malformed input file. Carries the offending location."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif path is not None:
            where += " "
        super().__init__(f"{where}{message}")


class BundleError(EmpliteError):
    """Unreadable model bundle. Names the section that failed."""

    def __init__(self, section, message):
        self.section = section
        super().__init__(f"bundle section '{section}': {message}")
