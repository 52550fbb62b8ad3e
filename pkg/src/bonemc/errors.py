"""Exception types shared across the package."""


class ModelError(Exception):
    """Base class for every failure raised by this package."""


class ParseError(ModelError):
    """Syntax error with source location and, when known, the expected tokens."""

    def __init__(self, message, line=None, col=None, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        loc = f" at line {line}, column {col}" if line is not None else ""
        exp = ""
        if self.expected:
            exp = " (expected " + ", ".join(self.expected) + ")"
        super().__init__(f"{message}{loc}{exp}")


class ValidationError(ModelError):
    """Structurally valid input that violates a semantic rule."""


class ConstantError(ModelError):
    """Constant resolution failure: missing override, cycle, bad override."""


class EvalError(ModelError):
    """Runtime expression evaluation failure (division by zero, pow domain)."""


class BuildError(ModelError):
    """State-space construction failure, with a witness state where possible."""
