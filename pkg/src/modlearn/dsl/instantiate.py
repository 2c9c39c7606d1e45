"""
Turning a parsed config tree into objects.

Every ``!obj:`` node becomes one constructor call with type-checked keyword
arguments. A node reached twice through an alias is built once, so both
references share the object. All problems found in one pass are raised
together as :class:`ConfigErrors`; nothing built is returned in that case.

Seeds: the root seed comes from the caller (the CLI ``--seed``), else from
the root mapping's ``seed`` key, else :data:`modlearn.rng.DEFAULT_SEED`.
Any registered type with a ``seed`` parameter that the config leaves out
receives ``derive_seed(root_seed, object_path)``, where the object path is
the dotted key path from the root, e.g. ``harness.algorithm.cost``.
"""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, field

from ..datasets import DatasetError, load_npy
from ..rng import DEFAULT_SEED, derive_seed
from .builtins import default_registry
from .errors import (ConfigError, ConfigErrors, ConstructionError,
                     InstantiationError, MissingParameterError, OverrideError,
                     TypeMismatchError, UnknownParameterError,
                     UnknownTypeError)
from .parser import Mapping, Scalar, Sequence, Tagged, parse, parse_file
from .registry import Registry, TypeCheckError, check_type

__all__ = ["ExperimentSpec", "instantiate", "load_experiment",
           "apply_overrides", "ROOT_PATH"]

ROOT_PATH = "harness"


@dataclass
class ExperimentSpec:
    """An instantiated experiment.

    ``origins`` maps ``id(obj)`` to ``(object_path, line, column)`` for
    every constructed object, for error reporting.
    """

    root: object
    seed: int
    origins: dict = field(default_factory=dict)
    objects: list = field(default_factory=list)
    source: str | None = None
    tree: object = None

    def locate(self, obj):
        return self.origins.get(id(obj), (ROOT_PATH, None, None))

    def path_of(self, obj) -> str:
        return self.locate(obj)[0]


class _Failed:
    def __repr__(self):
        return "<failed>"


FAILED = _Failed()

# Exceptions a constructor may raise for bad but well-typed arguments.
_CONSTRUCTION_ERRORS = (ValueError, TypeError, KeyError, IndexError, OSError,
                        NotImplementedError)


class _Builder:
    def __init__(self, registry, root_seed, source, base_dir):
        self.registry = registry
        self.root_seed = root_seed
        self.source = source
        self.base_dir = base_dir
        self.errors: list[ConfigError] = []
        self.memo = {}
        self.origins = {}
        self.objects = []
        self.force_root_seed = False

    def error(self, cls, message, node, path, line=None, column=None):
        self.errors.append(cls(message, line or node.line,
                               column or node.column, self.source, path))

    def resolve_path(self, path):
        if os.path.isabs(path) or self.base_dir is None:
            return path
        return os.path.join(self.base_dir, path)

    def build(self, node, path):
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        value = self._build(node, path)
        self.memo[key] = value
        return value

    def _build(self, node, path):
        if isinstance(node, Scalar):
            return node.value
        if isinstance(node, Sequence):
            items = [self.build(child, f"{path}[{i}]")
                     for i, child in enumerate(node.items)]
            return FAILED if any(v is FAILED for v in items) else items
        if isinstance(node, Mapping):
            out = {k: self.build(child, f"{path}.{k}")
                   for k, child in node.items.items()}
            return FAILED if any(v is FAILED for v in out.values()) else out
        if node.kind == "npy":
            file = self.resolve_path(node.tag)
            try:
                return load_npy(file)
            except (OSError, DatasetError, ValueError) as exc:
                self.error(InstantiationError, f"cannot load {file}: {exc}",
                           node, path)
                return FAILED
        return self._construct(node, path)

    def _construct(self, node, path):
        entry = self.registry.get(node.tag)
        if entry is None:
            close = difflib.get_close_matches(node.tag, self.registry.names(),
                                              n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            self.error(UnknownTypeError, f"unknown type {node.tag!r}{hint}",
                       node, path)
            return FAILED
        payload = node.payload
        kwargs = {}
        failed = False
        for key, child in payload.items.items():
            line, col = payload.key_positions.get(key, (node.line,
                                                        node.column))
            if key not in entry.params:
                close = difflib.get_close_matches(key, list(entry.params),
                                                  n=1)
                hint = f"; did you mean {close[0]!r}?" if close else ""
                self.error(UnknownParameterError,
                           f"{node.tag} has no parameter {key!r}{hint}",
                           node, path, line, col)
                failed = True
                continue
            value = self.build(child, f"{path}.{key}")
            if value is FAILED:
                failed = True
                continue
            try:
                kwargs[key] = check_type(value, entry.params[key].annotation,
                                         self.resolve_path)
            except TypeCheckError as exc:
                self.error(TypeMismatchError, f"{node.tag}.{key}: {exc}",
                           child, f"{path}.{key}")
                failed = True
        missing = [p for p in entry.required() if p not in payload.items]
        if missing:
            self.error(MissingParameterError,
                       f"{node.tag} is missing required parameter(s) "
                       f"{', '.join(missing)}", node, path)
            failed = True
        if failed:
            return FAILED
        if entry.takes_seed:
            if path == ROOT_PATH:
                if self.force_root_seed or kwargs.get("seed") is None:
                    kwargs["seed"] = self.root_seed
            elif kwargs.get("seed") is None:
                kwargs["seed"] = derive_seed(self.root_seed, path)
        try:
            obj = entry.factory(**kwargs)
        except ConfigError:
            raise
        except _CONSTRUCTION_ERRORS as exc:
            self.error(ConstructionError, f"{node.tag}: {exc}", node, path)
            return FAILED
        self.origins[id(obj)] = (path, node.line, node.column)
        self.objects.append(obj)
        return obj


def _root_seed(tree, seed):
    if seed is not None:
        return int(seed)
    payload = tree.payload if isinstance(tree, Tagged) else tree
    if isinstance(payload, Mapping) and "seed" in payload.items:
        node = payload.items["seed"]
        if isinstance(node, Scalar) and isinstance(node.value, int) \
                and not isinstance(node.value, bool):
            return node.value
    return DEFAULT_SEED


def instantiate(tree, registry: Registry | None = None, seed: int | None = None,
                source: str | None = None,
                base_dir: str | None = None) -> ExperimentSpec:
    """Build the object graph for ``tree``. With ``seed`` given, it
    replaces the root seed written in the config."""
    registry = registry or default_registry()
    root_seed = _root_seed(tree, seed)
    builder = _Builder(registry, root_seed, source, base_dir)
    builder.force_root_seed = seed is not None
    root = builder.build(tree, ROOT_PATH)
    if builder.errors:
        raise ConfigErrors(builder.errors)
    return ExperimentSpec(root, root_seed, builder.origins, builder.objects,
                          source, tree)


# ---------------------------------------------------------------------------
# Overrides
# ---------------------------------------------------------------------------


def apply_overrides(tree, overrides) -> None:
    """Apply ``dotted.path=value`` strings to ``tree`` in place.

    The path starts below the root object (a leading ``harness.`` is
    accepted); list items are addressed by index. The value is parsed as
    config text, so ``0.01``, ``true`` or ``!obj:...{...}`` all work.
    """
    errors = []
    for i, text in enumerate(overrides):
        label = f"--override #{i + 1}"
        try:
            _apply_one(tree, text, label)
        except ConfigError as exc:
            errors.append(exc)
    if errors:
        raise ConfigErrors(errors)


def _container(node):
    if isinstance(node, Tagged) and node.kind == "obj":
        return node.payload
    return node


def _apply_one(tree, text, label):
    if "=" not in text:
        raise OverrideError(f"override {text!r} is not of the form "
                            f"path=value", 1, 1, label)
    path, value_text = text.split("=", 1)
    parts = path.strip().split(".")
    if parts and parts[0] == ROOT_PATH and len(parts) > 1:
        parts = parts[1:]
    if not all(parts):
        raise OverrideError(f"malformed override path {path!r}", 1, 1, label)
    try:
        value = parse(value_text if value_text.strip() else "null", label)
    except ConfigError as exc:
        raise OverrideError(f"cannot parse value of {path}: {exc.message}",
                            1, len(path) + 1 + (exc.column or 1), label) \
            from None
    node = tree
    column = 1
    for depth, part in enumerate(parts):
        container = _container(node)
        last = depth == len(parts) - 1
        if isinstance(container, Mapping):
            if last:
                container.items[part] = value
                container.key_positions.setdefault(part, (1, 1))
                return
            if part not in container.items:
                raise OverrideError(f"override path {path}: no key {part!r}",
                                    1, column, label)
            node = container.items[part]
        elif isinstance(container, Sequence):
            try:
                index = int(part)
                container.items[index]
            except (ValueError, IndexError):
                raise OverrideError(f"override path {path}: bad list index "
                                    f"{part!r}", 1, column, label) from None
            if last:
                container.items[index] = value
                return
            node = container.items[index]
        else:
            raise OverrideError(f"override path {path}: {part!r} is inside "
                                f"a scalar", 1, column, label)
        column += len(part) + 1


def load_experiment(path, overrides=(), seed: int | None = None,
                    registry: Registry | None = None) -> ExperimentSpec:
    """Parse, override and instantiate the experiment file at ``path``."""
    tree = parse_file(path)
    apply_overrides(tree, overrides)
    return instantiate(tree, registry, seed, source=str(path),
                       base_dir=os.path.dirname(os.path.abspath(path)))
