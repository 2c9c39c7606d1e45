"""
Parsing and serializing experiment files.

The accepted language is a YAML subset: block and flow mappings and
sequences, plain and quoted scalars, comments, anchors and aliases, plus
two tags:

``!obj:<dotted.name>``
    on a mapping (or on nothing, meaning an empty mapping): construct the
    registered object ``dotted.name`` with the mapping as arguments.
``!npy:<path>``
    on an empty scalar: load an array from an NPY file, relative to the
    config file's directory.

Merge keys, multiple documents and all other tags are rejected.
Tokenizing is delegated to PyYAML's composer; scalar typing is our own:
``true``/``false`` are booleans, ``null``/``~``/empty is null, integers are
``[+-]?digits``, and floats include scientific notation such as ``1e-2``.
Everything else is a string.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import yaml
from yaml.events import AliasEvent

from .errors import (DuplicateKeyError, ParseError, UndefinedAliasError,
                     UnsupportedFeatureError)

__all__ = ["Scalar", "Sequence", "Mapping", "Tagged", "ConfigNode", "parse",
           "parse_file", "serialize", "resolve_scalar"]


@dataclass
class Scalar:
    value: object
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)
    anchor: str | None = field(default=None, compare=False)


@dataclass
class Sequence:
    items: list
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)
    anchor: str | None = field(default=None, compare=False)


@dataclass
class Mapping:
    items: dict
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)
    anchor: str | None = field(default=None, compare=False)
    key_positions: dict = field(default_factory=dict, compare=False)


@dataclass
class Tagged:
    """``kind`` is ``"obj"`` (``tag`` names a registered type, ``payload``
    is a Mapping) or ``"npy"`` (``tag`` is a file path)."""

    tag: str
    payload: object
    kind: str = "obj"
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)
    anchor: str | None = field(default=None, compare=False)


ConfigNode = Scalar | Sequence | Mapping | Tagged

_IMPLICIT = "?implicit"
_YAML_TAG_PREFIX = "tag:yaml.org,2002:"
_INT = re.compile(r"[-+]?[0-9]+\Z")
_FLOAT = re.compile(r"[-+]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][-+]?[0-9]+)?\Z")
_SPECIAL_FLOATS = {".inf": math.inf, "+.inf": math.inf, "-.inf": -math.inf,
                   ".nan": math.nan, ".Inf": math.inf, "-.Inf": -math.inf,
                   ".NaN": math.nan}
_TAG_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*\Z")


def resolve_scalar(text: str):
    """Type of a plain (unquoted) scalar."""
    if text in ("", "~", "null", "Null", "NULL"):
        return None
    if text in ("true", "True", "TRUE"):
        return True
    if text in ("false", "False", "FALSE"):
        return False
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text):
        return float(text)
    if text in _SPECIAL_FLOATS:
        return _SPECIAL_FLOATS[text]
    return text


class _Loader(yaml.SafeLoader):
    """Composer that keeps explicit tags recognizable and remembers anchor
    names."""

    def __init__(self, stream):
        super().__init__(stream)
        self.anchor_names = {}

    def resolve(self, kind, value, implicit):
        return _IMPLICIT

    def compose_node(self, parent, index):
        if self.check_event(AliasEvent):
            return super().compose_node(parent, index)
        anchor = self.peek_event().anchor
        node = super().compose_node(parent, index)
        if anchor is not None:
            self.anchor_names[id(node)] = anchor
        return node


def _pos(mark):
    return mark.line + 1, mark.column + 1


def _snippet(text, mark) -> str:
    if mark is None:
        return ""
    lines = text.splitlines()
    if mark.line >= len(lines):
        return " near end of input"
    token = lines[mark.line][mark.column:mark.column + 20].strip()
    return f" near {token!r}" if token else " near end of line"


class _Converter:
    def __init__(self, text, source, anchor_names):
        self.text = text
        self.source = source
        self.anchor_names = anchor_names
        self.memo = {}
        self.active = set()

    def error(self, cls, message, node):
        line, col = _pos(node.start_mark)
        return cls(message, line, col, self.source)

    def convert(self, node):
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            raise self.error(UnsupportedFeatureError,
                             "recursive alias: a node contains itself", node)
        self.active.add(key)
        try:
            out = self._convert(node)
        finally:
            self.active.discard(key)
        out.anchor = self.anchor_names.get(key)
        self.memo[key] = out
        return out

    def _convert(self, node):
        line, col = _pos(node.start_mark)
        tag = node.tag
        if tag != _IMPLICIT:
            return self._tagged(node, tag, line, col)
        if isinstance(node, yaml.ScalarNode):
            value = node.value if node.style else resolve_scalar(node.value)
            return Scalar(value, line, col)
        if isinstance(node, yaml.SequenceNode):
            return Sequence([self.convert(n) for n in node.value], line, col)
        return self._mapping(node, line, col)

    def _mapping(self, node, line, col):
        items, positions = {}, {}
        for knode, vnode in node.value:
            if not isinstance(knode, yaml.ScalarNode) or knode.tag != _IMPLICIT:
                raise self.error(ParseError, "mapping keys must be plain "
                                 "strings", knode)
            key = knode.value if knode.style else resolve_scalar(knode.value)
            if key == "<<" and not knode.style:
                raise self.error(UnsupportedFeatureError,
                                 "merge keys ('<<') are not supported", knode)
            if not isinstance(key, str):
                raise self.error(ParseError, f"mapping key {knode.value!r} "
                                 f"is not a string", knode)
            if key in items:
                first = positions[key]
                raise self.error(DuplicateKeyError,
                                 f"duplicate key {key!r} (first defined at "
                                 f"line {first[0]})", knode)
            positions[key] = _pos(knode.start_mark)
            items[key] = self.convert(vnode)
        return Mapping(items, line, col, key_positions=positions)

    def _tagged(self, node, tag, line, col):
        if tag.startswith("!obj:"):
            name = tag[len("!obj:"):]
            if not _TAG_NAME.match(name):
                raise self.error(ParseError, f"malformed type name {name!r} "
                                 f"in tag {tag!r}", node)
            if isinstance(node, yaml.MappingNode):
                payload = self._mapping(node, line, col)
            elif isinstance(node, yaml.ScalarNode) and node.value == "" \
                    and not node.style:
                payload = Mapping({}, line, col)
            else:
                raise self.error(ParseError, f"tag {tag!r} must be applied to "
                                 f"a mapping", node)
            return Tagged(name, payload, "obj", line, col)
        if tag.startswith("!npy:"):
            path = tag[len("!npy:"):]
            if not path:
                raise self.error(ParseError, "!npy: needs a file path", node)
            if not (isinstance(node, yaml.ScalarNode) and node.value == ""):
                raise self.error(ParseError, "write !npy:<path> with nothing "
                                 "after it", node)
            return Tagged(path, Scalar(None, line, col), "npy", line, col)
        if tag.startswith(_YAML_TAG_PREFIX):
            tag = "!!" + tag[len(_YAML_TAG_PREFIX):]
        raise self.error(UnsupportedFeatureError,
                         f"unsupported tag {tag!r}; only !obj:<type> and "
                         f"!npy:<path> are allowed", node)


def parse(text: str, source: str | None = None):
    """Parse experiment text into a tree of config nodes."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    loader = _Loader(text)
    try:
        if not loader.check_node():
            raise ParseError("empty configuration", 1, 1, source)
        root = loader.get_node()
        if loader.check_node():
            mark = loader.peek_event().start_mark
            raise UnsupportedFeatureError(
                "several documents in one file are not supported",
                *_pos(mark), source)
        converter = _Converter(text, source, loader.anchor_names)
        return converter.convert(root)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = _pos(mark) if mark is not None else (None, None)
        problem = exc.problem or exc.context or "syntax error"
        cls = UndefinedAliasError if "undefined alias" in problem \
            else ParseError
        raise cls(f"{problem}{_snippet(text, mark)}", line, col, source) \
            from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc), 1, 1, source) from None
    finally:
        loader.dispose()


def parse_file(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"file is not UTF-8: {exc}", 1, 1, str(path)) \
            from None
    return parse(text, str(path))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _scalar_text(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ".nan"
        if math.isinf(value):
            return ".inf" if value > 0 else "-.inf"
        return repr(value)
    return _quote(str(value))


def _quote(text: str) -> str:
    """Double-quoted YAML string; everything outside printable ASCII is
    escaped, astral characters as a single ``\\U`` escape."""
    out = ['"']
    for ch in text:
        code = ord(ch)
        if ch in '"\\':
            out.append("\\" + ch)
        elif 0x20 <= code < 0x7F:
            out.append(ch)
        elif code <= 0xFF:
            out.append(f"\\x{code:02x}")
        elif code <= 0xFFFF:
            out.append(f"\\u{code:04x}")
        else:
            out.append(f"\\U{code:08x}")
    out.append('"')
    return "".join(out)


class _Serializer:
    def __init__(self, root):
        counts = {}
        self._count(root, counts)
        self.shared = {k for k, n in counts.items() if n > 1}
        self.names = {}
        self.lines = []

    def _count(self, node, counts):
        key = id(node)
        counts[key] = counts.get(key, 0) + 1
        if counts[key] > 1:
            return
        for child in _children(node):
            self._count(child, counts)

    def _anchor(self, node):
        """Returns ``(prefix, done)``: the anchor or alias text to write
        and whether the node is already fully written."""
        key = id(node)
        if key not in self.shared:
            return "", False
        if key in self.names:
            return f"*{self.names[key]}", True
        name = node.anchor or f"a{len(self.names) + 1}"
        while name in self.names.values():
            name += "_"
        self.names[key] = name
        return f"&{name} ", False

    def inline(self, node):
        """Text for a node that fits on the current line, or ``None``."""
        if isinstance(node, Scalar):
            return _scalar_text(node.value)
        if isinstance(node, Tagged) and node.kind == "npy":
            return f"!npy:{node.tag}"
        if isinstance(node, Tagged) and not node.payload.items:
            return f"!obj:{node.tag} {{}}"
        if isinstance(node, Mapping) and not node.items:
            return "{}"
        if isinstance(node, Sequence) and not node.items:
            return "[]"
        return None

    def value(self, node, indent, lead):
        """Write ``node`` after ``lead`` (e.g. ``"key:"`` or ``"-"``)."""
        prefix, done = self._anchor(node)
        pad = " " * indent
        if done:
            self.lines.append(f"{pad}{lead} {prefix}")
            return
        text = self.inline(node)
        if text is not None:
            self.lines.append(f"{pad}{lead} {prefix}{text}")
            return
        head = f"{pad}{lead} {prefix}".rstrip()
        if isinstance(node, Tagged):
            head = f"{pad}{lead} {prefix}!obj:{node.tag}"
            node = node.payload
        self.lines.append(head)
        self.block(node, indent + 2)

    def block(self, node, indent):
        pad = " " * indent
        if isinstance(node, Mapping):
            for key, child in node.items.items():
                self.value(child, indent, f"{_quote(key)}:")
        else:
            for child in node.items:
                self.value(child, indent, "-")
        if not node.items:
            self.lines.append(f"{pad}{self.inline(node)}")

    def root(self, node):
        prefix, _ = self._anchor(node)
        text = self.inline(node)
        if text is not None:
            self.lines.append(f"{prefix}{text}")
            return
        if isinstance(node, Tagged):
            self.lines.append(f"{prefix}!obj:{node.tag}")
            self.block(node.payload, 2)
            return
        if prefix:
            self.lines.append(prefix.rstrip())
            self.block(node, 2)
        else:
            self.block(node, 0)


def _children(node):
    if isinstance(node, Sequence):
        return list(node.items)
    if isinstance(node, Mapping):
        return list(node.items.values())
    if isinstance(node, Tagged):
        return [] if node.kind == "npy" else [node.payload]
    return []


def serialize(node) -> str:
    """Write a config tree back to text that parses to an equal tree, with
    shared nodes written once and aliased afterwards."""
    s = _Serializer(node)
    s.root(node)
    return "\n".join(s.lines) + "\n"
