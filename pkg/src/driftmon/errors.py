"""Exception hierarchy shared across the package."""


class DriftmonError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DriftmonError, ValueError):
    """Invalid parameters for a generator, policy or experiment."""


class LipschitzViolationError(ConfigurationError):
    """A requested accuracy path changes faster than the drift bound allows."""


class ValidationError(DriftmonError, ValueError):
    """Input data outside its documented domain."""


class ParseError(ValidationError):
    """Malformed input file; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
