"""Experiment files: parse, instantiate, validate."""

from .builtins import default_registry
from .errors import (ConfigError, ConfigErrors, ConstructionError,
                     DuplicateKeyError, InstantiationError,
                     MissingParameterError, OverrideError, ParseError,
                     TypeMismatchError, UndefinedAliasError,
                     UnknownParameterError, UnknownTypeError,
                     UnsupportedFeatureError, ValidationError)
from .instantiate import (ExperimentSpec, apply_overrides, instantiate,
                          load_experiment)
from .parser import (Mapping, Scalar, Sequence, Tagged, parse, parse_file,
                     serialize)
from .registry import Registry
from .validate import check, validate

__all__ = ["parse", "parse_file", "serialize", "Scalar", "Sequence",
           "Mapping", "Tagged", "Registry", "default_registry", "instantiate",
           "load_experiment", "apply_overrides", "ExperimentSpec", "validate",
           "check", "ConfigError", "ConfigErrors", "ParseError",
           "DuplicateKeyError", "UndefinedAliasError",
           "UnsupportedFeatureError", "InstantiationError",
           "UnknownTypeError", "UnknownParameterError",
           "MissingParameterError", "TypeMismatchError", "ConstructionError",
           "OverrideError", "ValidationError"]
