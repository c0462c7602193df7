"""Line-oriented ``key = value`` config files with ``[section]`` headers.

``#`` and ``;`` start comments.  Values are validated against a schema of
:class:`Key` entries; unknown keys, malformed lines and invalid values
raise :class:`ParseError` carrying the line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .errors import ParseError


class InvariantViolationError(ParseError):
    """A well-formed value violates a documented constraint."""


REQUIRED = object()


@dataclass(frozen=True)
class Entry:
    section: str
    key: str
    value: str
    line: int


@dataclass(frozen=True)
class Key:
    convert: Callable[[str], Any]
    default: Any = REQUIRED
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def read_entries(path):
    with open(path) as fh:
        return parse_entries(fh.read())


def parse_entries(text):
    entries = []
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section header {raw.strip()!r}", n)
            section = line[1:-1].strip().lower()
            entries.append(Entry(section, "", "", n))
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", n)
        entries.append(Entry(section, key.lower(), value, n))
    return entries


def split_blocks(entries):
    """Group entries into ``(section, header_line, [entries])`` blocks in file order."""
    blocks = []
    for e in entries:
        if e.key == "":
            blocks.append((e.section, e.line, []))
        elif not blocks:
            raise ParseError(f"key {e.key!r} outside any section", e.line, e.key)
        else:
            blocks[-1][2].append(e)
    return blocks


def apply_schema(block_entries, schema, section, header_line=None):
    """Convert and validate one block; omitted optional keys take their defaults."""
    out = {}
    seen = {}
    for e in block_entries:
        if e.key not in schema:
            raise ParseError(f"unknown key {e.key!r} in [{section}]", e.line, e.key)
        if e.key in seen:
            raise ParseError(f"duplicate key {e.key!r} (first on line {seen[e.key]})", e.line, e.key)
        seen[e.key] = e.line
        spec = schema[e.key]
        try:
            value = spec.convert(e.value)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad value for {e.key!r}: {exc}", e.line, e.key) from None
        if spec.check is not None and not spec.check(value):
            raise InvariantViolationError(f"{e.key} = {e.value} violates: {spec.rule}", e.line, e.key)
        out[e.key] = value
    for name, spec in schema.items():
        if name in out:
            continue
        if spec.default is REQUIRED:
            raise ParseError(f"missing required key {name!r} in [{section}]", header_line, name)
        out[name] = spec.default
    return out


# value converters

def floats(n=None):
    def conv(s):
        vals = tuple(float(v) for v in s.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return conv


def ints(n=None):
    def conv(s):
        vals = tuple(int(v) for v in s.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} integers, got {len(vals)}")
        return vals
    return conv


def complex_value(s):
    parts = floats()(s)
    if len(parts) == 1:
        return complex(parts[0], 0.0)
    if len(parts) == 2:
        return complex(*parts)
    raise ValueError("expected 're' or 're, im'")


def boolean(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def words(s):
    vals = tuple(v.strip().lower() for v in s.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals
