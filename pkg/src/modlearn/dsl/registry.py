"""
Registry of constructible types.

Each entry maps a dotted name (``train.sgd``) to a constructor together with
its parameter descriptors, read from the constructor signature and type
hints. Entries may override individual parameter types, which is how
unannotated arguments such as ``cost`` get checked.
"""

from __future__ import annotations

import inspect
import types
import typing
from dataclasses import dataclass

import numpy as np

__all__ = ["Registry", "Entry", "Param", "ConfigPath", "TypeCheckError",
           "check_type", "describe_type"]


class ConfigPath(str):
    """Annotation for file paths, resolved against the config file's
    directory."""


class TypeCheckError(Exception):
    pass


class _Missing:
    def __repr__(self):
        return "<required>"


_MISSING = _Missing()


@dataclass
class Param:
    name: str
    annotation: object = typing.Any
    default: object = _MISSING

    @property
    def required(self) -> bool:
        return self.default is _MISSING


@dataclass
class Entry:
    name: str
    factory: object
    params: dict

    @property
    def takes_seed(self) -> bool:
        return "seed" in self.params

    def required(self):
        return [p.name for p in self.params.values() if p.required]


def _hints(factory):
    target = factory.__init__ if inspect.isclass(factory) else factory
    try:
        return typing.get_type_hints(target)
    except Exception:  # unresolvable forward references: fall back to Any
        return {}


class Registry:
    """Closed map from type names to constructors."""

    def __init__(self):
        self._entries: dict[str, Entry] = {}

    def register(self, name: str, factory, types: dict | None = None):
        if name in self._entries:
            raise ValueError(f"type {name!r} is already registered")
        hints = _hints(factory)
        hints.update(types or {})
        params = {}
        for p in inspect.signature(factory).parameters.values():
            if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
                continue
            default = _MISSING if p.default is p.empty else p.default
            params[p.name] = Param(p.name, hints.get(p.name, typing.Any),
                                   default)
        self._entries[name] = Entry(name, factory, params)
        return factory

    def get(self, name: str) -> Entry | None:
        return self._entries.get(name)

    def __contains__(self, name):
        return name in self._entries

    def names(self) -> list[str]:
        return sorted(self._entries)

    def copy(self) -> "Registry":
        out = Registry()
        out._entries = dict(self._entries)
        return out


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------


def describe_type(tp) -> str:
    if tp is typing.Any:
        return "anything"
    if tp is type(None):
        return "null"
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        return " or ".join(describe_type(a) for a in typing.get_args(tp))
    if origin in (list, tuple):
        args = typing.get_args(tp)
        return f"list of {describe_type(args[0])}" if args else "list"
    if origin is dict:
        args = typing.get_args(tp)
        return f"mapping of {describe_type(args[1])}" if args else "mapping"
    if tp is ConfigPath:
        return "file path"
    if tp is np.ndarray:
        return "array (!npy:)"
    return getattr(tp, "__name__", str(tp))


def _describe_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, int, float, str)):
        return f"{type(value).__name__} {value!r}"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "mapping"
    return type(value).__name__


def check_type(value, tp, resolve_path=None):
    """Return ``value`` (with int to float coercion and paths resolved) or
    raise :class:`TypeCheckError` describing the mismatch."""
    if tp is typing.Any or tp is inspect.Parameter.empty:
        return value
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        for option in typing.get_args(tp):
            try:
                return check_type(value, option, resolve_path)
            except TypeCheckError:
                continue
        raise _mismatch(value, tp)
    if tp is type(None):
        if value is None:
            return None
        raise _mismatch(value, tp)
    if origin in (list, tuple, typing.Sequence):
        if not isinstance(value, (list, tuple)):
            raise _mismatch(value, tp)
        args = typing.get_args(tp)
        if not args:
            return list(value)
        return [check_type(v, args[0], resolve_path) for v in value]
    if origin is dict:
        if not isinstance(value, dict):
            raise _mismatch(value, tp)
        args = typing.get_args(tp)
        if not args:
            return dict(value)
        return {k: check_type(v, args[1], resolve_path)
                for k, v in value.items()}
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise _mismatch(value, tp)
    if tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise _mismatch(value, tp)
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise _mismatch(value, tp)
    if tp is ConfigPath:
        if isinstance(value, str):
            return resolve_path(value) if resolve_path else value
        raise _mismatch(value, tp)
    if tp is str:
        if isinstance(value, str):
            return value
        raise _mismatch(value, tp)
    if tp is list:
        return check_type(value, list[typing.Any], resolve_path)
    if tp is dict:
        return check_type(value, dict[str, typing.Any], resolve_path)
    if inspect.isclass(tp):
        if isinstance(value, tp):
            return value
        raise _mismatch(value, tp)
    return value


def _mismatch(value, tp):
    return TypeCheckError(f"expected {describe_type(tp)}, got "
                          f"{_describe_value(value)}")
