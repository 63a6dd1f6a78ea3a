"""
Utility functions shared across modules.

Helpers for content digests, byte-stable JSON output and path handling.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Union

PathLike = Union[str, Path]

# Fixed precision for every float written to a model or report file.
FLOAT_DIGITS = 6


def sha256_bytes(data: bytes) -> str:
    """Return the hex SHA-256 digest of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: PathLike) -> str:
    """
    Return the hex SHA-256 digest of a file's raw bytes.

    Args:
        path: File to hash

    Returns:
        64-character lowercase hex digest
    """
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def ensure_output_directory(output_path: PathLike) -> None:
    """Ensure the parent directory exists for the given file path."""
    Path(output_path).parent.mkdir(parents=True, exist_ok=True)


def round_floats(value: Any, digits: int = FLOAT_DIGITS) -> Any:
    """Recursively round every float in a JSON-like structure."""
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return round(value, digits)
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    return value


def dumps_stable(data: Any) -> str:
    """Serialize to JSON with sorted keys and fixed float precision."""
    return json.dumps(round_floats(data), indent=2, sort_keys=True) + "\n"


def write_stable_json(path: PathLike, data: Any) -> None:
    """Write JSON that is byte-identical for identical inputs."""
    ensure_output_directory(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_stable(data))


def read_json(path: PathLike) -> Any:
    """Read a JSON document from disk."""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def relative_posix(path: PathLike, start: PathLike) -> str:
    """Path of ``path`` relative to directory ``start``, with forward slashes."""
    return Path(os.path.relpath(Path(path).resolve(), Path(start).resolve())).as_posix()
