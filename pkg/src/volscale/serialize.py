"""Deterministic serialization: full-precision floats, canonical JSON, atomic writes.

Floats are rendered with 17 significant digits, which round-trips IEEE 754
doubles exactly, so equal inputs always produce byte-identical files and a
reload loses no precision.
"""

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

from .errors import OutputExistsError

__all__ = ["fmt_float", "json_dumps", "sha256_hex", "write_text_files"]


def fmt_float(value: float) -> str:
    """Render a finite float with 17 significant digits."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite value {value!r}")
    return format(value, ".17g")


def json_dumps(obj) -> str:
    """Canonical pretty JSON: 2-space indent, insertion-ordered keys, .17g floats."""
    pieces: list[str] = []
    _write_json(obj, pieces, depth=0)
    return "".join(pieces)


def _write_json(obj, pieces: list[str], depth: int) -> None:
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if obj is None:
        pieces.append("null")
    elif isinstance(obj, bool):
        pieces.append("true" if obj else "false")
    elif isinstance(obj, int):
        pieces.append(str(obj))
    elif isinstance(obj, float):
        pieces.append(fmt_float(obj))
    elif isinstance(obj, str):
        pieces.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        if not obj:
            pieces.append("[]")
            return
        pieces.append("[\n")
        for i, item in enumerate(obj):
            pieces.append(inner)
            _write_json(item, pieces, depth + 1)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        keys = list(obj)
        for i, key in enumerate(keys):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            pieces.append(inner + json.dumps(key, ensure_ascii=False) + ": ")
            _write_json(obj[key], pieces, depth + 1)
            pieces.append(",\n" if i < len(keys) - 1 else "\n")
        pieces.append(pad + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_text_files(directory: str | Path, contents: dict[str, str], *, force: bool = False) -> list[Path]:
    """Write named text files into a directory atomically (temp file + rename).

    Existing targets abort the whole batch unless ``force`` is set; the check
    runs before anything is written, so a refused run leaves no new files.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = sorted(name for name in contents if (directory / name).exists())
        if existing:
            raise OutputExistsError(
                f"refusing to overwrite existing file(s) in {directory}: "
                f"{', '.join(existing)} (use --force)"
            )
    written: list[Path] = []
    for name, text in contents.items():
        target = directory / name
        handle, temp_name = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
                stream.write(text)
            os.replace(temp_name, target)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
        written.append(target)
    return written
