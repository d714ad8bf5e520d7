"""Line-oriented ``key = value`` text files.

Every config, calibration and camera file in this package uses the same
format::

    # comment lines start with '#'
    fx = 500.0
    dist = [0.1, -0.02, 0.0, 0.0]
    name = front

Values are kept as strings by :func:`read_kv`; the typed getters on
:class:`KVFile` do the conversion and raise :class:`FormatError` naming the
offending key and line.
"""

from __future__ import annotations

import math
from pathlib import Path

from .errors import FormatError, NumericParseError


class KVFile:
    def __init__(self, entries, path="<string>"):
        # entries: key -> (raw value, line number)
        self._entries = dict(entries)
        self.path = str(path)

    def __contains__(self, key):
        return key in self._entries

    def keys(self):
        return self._entries.keys()

    def _raw(self, key):
        try:
            return self._entries[key]
        except KeyError:
            raise FormatError(f"{self.path}: missing required key '{key}'") from None

    def _fail(self, key, line, what, cls=FormatError):
        return cls(f"{self.path}:{line}: key '{key}': {what}")

    def str(self, key, default=None):
        if default is not None and key not in self:
            return default
        return self._raw(key)[0]

    def float(self, key, default=None):
        if default is not None and key not in self:
            return float(default)
        raw, line = self._raw(key)
        try:
            return float(raw)
        except ValueError:
            raise self._fail(key, line, f"cannot parse {raw!r} as a number", NumericParseError) from None

    def int(self, key, default=None):
        if default is not None and key not in self:
            return int(default)
        raw, line = self._raw(key)
        try:
            return int(raw)
        except ValueError:
            raise self._fail(key, line, f"cannot parse {raw!r} as an integer", NumericParseError) from None

    def bool(self, key, default=None):
        if default is not None and key not in self:
            return bool(default)
        raw, line = self._raw(key)
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise self._fail(key, line, f"cannot parse {raw!r} as a boolean")

    def list(self, key, default=None):
        if default is not None and key not in self:
            return list(default)
        raw, line = self._raw(key)
        if not (raw.startswith("[") and raw.endswith("]")):
            raise self._fail(key, line, "expected a bracketed list")
        body = raw[1:-1].strip()
        return [item.strip() for item in body.split(",")] if body else []

    def floats(self, key, default=None):
        if default is not None and key not in self:
            return [float(x) for x in default]
        items = self.list(key)
        try:
            return [float(x) for x in items]
        except ValueError:
            raise self._fail(key, self._raw(key)[1], "list holds a non-number", NumericParseError) from None


def parse_kv(text, path="<string>"):
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        entries[key] = (value, lineno)
    return KVFile(entries, path)


def read_kv(path):
    path = Path(path)
    return parse_kv(path.read_text(), path)


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            return str(value)
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def dump_kv(items, header=None):
    """Render ``items`` (a mapping or pair sequence) as key-value text."""
    lines = []
    if header:
        lines.extend(f"# {h}" if h else "#" for h in header.splitlines())
    pairs = items.items() if hasattr(items, "items") else items
    for key, value in pairs:
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def write_kv(path, items, header=None):
    Path(path).write_text(dump_kv(items, header))
