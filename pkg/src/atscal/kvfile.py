"""Reader/writer for the ``key=value`` text files used for params, configs and oracles.

Floats are written with 17 significant digits so they round-trip bit-exactly.
Lines starting with ``#`` and blank lines are ignored on read; key order is
preserved on write.
"""

from pathlib import Path

import numpy as np

from .errors import ParseError


def format_float(x):
    return format(float(x), ".17g")


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, np.ndarray):
        return ",".join(format_float(v) for v in value.ravel())
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    text = str(value)
    if "\n" in text:
        raise ValueError("values must be single-line")
    return text


def dumps(items):
    return "".join(f"{key}={format_value(value)}\n" for key, value in items.items())


def write(path, items):
    Path(path).write_text(dumps(items), encoding="utf-8")


def loads(text, path=None):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"expected key=value, got {raw!r}", path, lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", path, lineno)
        out[key] = value.strip()
    return out


def read(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", path) from exc
    return loads(text, path)


# typed accessors; ``source`` only feeds error messages

def get_str(items, key, default=None, source=None):
    if key in items:
        return items[key]
    if default is not None:
        return default
    raise ParseError(f"missing key {key!r}", source)


def get_float(items, key, default=None, source=None):
    raw = get_str(items, key, None if default is None else str(default), source)
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"{key}: not a number: {raw!r}", source) from None


def get_int(items, key, default=None, source=None):
    raw = get_str(items, key, None if default is None else str(default), source)
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"{key}: not an integer: {raw!r}", source) from None


def get_floats(items, key, source=None):
    raw = get_str(items, key, source=source)
    if raw == "":
        return np.zeros(0)
    try:
        return np.array([float(v) for v in raw.split(",")], dtype=np.float64)
    except ValueError:
        raise ParseError(f"{key}: not a list of numbers: {raw!r}", source) from None


def get_list(items, key, default=None, source=None):
    raw = get_str(items, key, default, source)
    return [v.strip() for v in raw.split(",") if v.strip()]
