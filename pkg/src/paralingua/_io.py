"""Small helpers for lossless, reproducible numeric text output."""

import json
import os

import numpy as np


def fmt(x):
    """Shortest round-trip decimal for a float (``repr`` of a Python float)."""
    return repr(float(x))


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def dump_json(obj, path):
    write_text(path, json.dumps(obj, indent=1, sort_keys=False) + "\n")


def load_json(path):
    from .errors import FormatError

    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}") from exc


def to_list(a):
    """Nested Python floats from an array, for JSON output."""
    return np.asarray(a, dtype=float).tolist()


def check_version(obj, path, expected=1):
    from .errors import FormatError

    if not isinstance(obj, dict) or obj.get("format_version") != expected:
        raise FormatError(f"{path}: missing or unsupported format_version")
