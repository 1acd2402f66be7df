"""Shared document I/O for the on-disk text formats.

Every structured artifact (graphs, design spaces, configurations, oracle
models, dataset manifests, ADRS reports) is a UTF-8 JSON document written
with a fixed key order and a trailing newline, so that identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any


class SchemaError(ValueError):
    """A document violates its schema. ``path`` points at the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def dump_document(doc: dict) -> str:
    """Serialize a document deterministically (insertion key order, 2-space indent)."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_document(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dump_document(doc), encoding="utf-8")


def read_document(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(str(path), "file not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(str(path), "top-level value must be an object")
    return doc


def require(doc: dict, key: str, kind: type | tuple, path: str) -> Any:
    """Fetch ``doc[key]`` checking its type; raise SchemaError with a field path."""
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    value = doc[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        want = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SchemaError(f"{path}.{key}" if path else key,
                          f"expected {want}, got {type(value).__name__}")
    return value


def require_int(doc: dict, key: str, path: str, minimum: int | None = None) -> int:
    value = require(doc, key, int, path)
    if minimum is not None and value < minimum:
        raise SchemaError(f"{path}.{key}" if path else key,
                          f"expected integer >= {minimum}, got {value}")
    return value


def reject_unknown_keys(doc: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
