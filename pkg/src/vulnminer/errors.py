"""Shared exception types."""

from __future__ import annotations


class VulnMinerError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(VulnMinerError):
    """Lexing or parsing failure with a source position.

    ``span`` is a ``Span`` when known; ``expected`` carries a hint about
    the token class the parser was looking for.
    """

    def __init__(self, message, span=None, expected=None, path=None):
        super().__init__(message)
        self.message = message
        self.span = span
        self.expected = expected
        self.path = path

    def __str__(self):
        loc = ""
        if self.span is not None:
            loc = f" at line {self.span.start_line}, col {self.span.start_col}"
        where = f" in {self.path}" if self.path else ""
        hint = f" (expected {self.expected})" if self.expected else ""
        return f"{self.message}{loc}{where}{hint}"


class ConfigError(VulnMinerError):
    """Invalid configuration or model/shape mismatch."""


class NumericError(VulnMinerError):
    """NaN/Inf encountered during a numeric computation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LexiconError(VulnMinerError):
    """Taint lexicon is malformed or inconsistent with the classifier."""


class NoFindingError(VulnMinerError):
    """A positive detection verdict had no supporting taint finding."""


class TrainingError(VulnMinerError):
    """Training preconditions violated (e.g. single-class corpus)."""
