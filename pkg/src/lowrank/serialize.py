"""Deterministic JSON output.

Floats are written with 17 significant digits so that every float64
round-trips exactly.  Non-finite floats, which JSON cannot represent, are
written as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.  Lists of
scalars stay on one line; everything else is indented by two spaces.
"""

import json
import math
import os
import tempfile

import numpy as np


def _scalar(value):
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        text = format(x, ".17g")
        if "e" not in text and "." not in text and "n" not in text:
            text += ".0"
        return text
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _is_scalar(value):
    return value is None or isinstance(
        value, (bool, int, float, str, np.bool_, np.integer, np.floating))


def _encode(value, indent):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, tuple):
        value = list(value)
    if _is_scalar(value):
        return _scalar(value)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, list):
        if all(_is_scalar(v) or isinstance(v, (np.floating, np.integer)) for v in value):
            return "[" + ", ".join(_scalar(v) for v in value) + "]"
        items = [pad + _encode(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps(value):
    """Serialise ``value`` deterministically; ends with a newline."""
    return _encode(value, 0) + "\n"


def as_float(value):
    """Inverse of the non-finite string convention."""
    return float(value)


def as_array(values):
    """Nested lists (possibly holding ``"inf"`` strings) to a float array."""
    if isinstance(values, list):
        return np.array([as_array(v) for v in values], dtype=np.float64) if values else \
            np.zeros(0)
    return as_float(values)


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".lowrank-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
