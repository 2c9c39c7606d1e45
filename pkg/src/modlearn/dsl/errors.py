"""Configuration error classes. Every error carries a source position."""

from __future__ import annotations

__all__ = ["ConfigError", "ConfigErrors", "ParseError", "DuplicateKeyError",
           "UndefinedAliasError", "UnsupportedFeatureError",
           "InstantiationError", "UnknownTypeError", "UnknownParameterError",
           "MissingParameterError", "TypeMismatchError", "ConstructionError",
           "OverrideError", "ValidationError"]


class ConfigError(Exception):
    """
    Base class.

    Parameters
    ----------
    message : str
    line, column : int, optional
        1-based position in ``source``.
    source : str, optional
        File name, or a label such as ``--override``.
    path : str, optional
        Object path such as ``harness.algorithm.cost``.
    """

    def __init__(self, message, line=None, column=None, source=None,
                 path=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        self.path = path
        super().__init__(self.format())

    def position(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where += f":{self.line}:{self.column}"
        return where

    def format(self) -> str:
        kind = type(self).__name__
        path = f" [{self.path}]" if self.path else ""
        return f"{self.position()}: {kind}: {self.message}{path}"


class ConfigErrors(ConfigError):
    """Several errors found in one pass."""

    def __init__(self, errors):
        self.errors = list(errors)
        first = self.errors[0]
        super().__init__("\n".join(e.format() for e in self.errors),
                         first.line, first.column, first.source, first.path)

    def format(self):
        return self.message

    def __iter__(self):
        return iter(self.errors)


class ParseError(ConfigError):
    pass


class DuplicateKeyError(ParseError):
    pass


class UndefinedAliasError(ParseError):
    pass


class UnsupportedFeatureError(ParseError):
    """Valid YAML outside the supported subset (merge keys, foreign tags,
    several documents, recursive aliases)."""


class InstantiationError(ConfigError):
    pass


class UnknownTypeError(InstantiationError):
    pass


class UnknownParameterError(InstantiationError):
    pass


class MissingParameterError(InstantiationError):
    pass


class TypeMismatchError(InstantiationError):
    pass


class ConstructionError(InstantiationError):
    """A constructor rejected its (well-typed) arguments."""


class OverrideError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
