"""Shared small helpers: errors, hashing, JSONL io."""

from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable, Iterator


class DataError(RuntimeError):
    """Raised for unusable input data, files, or incompatible artifacts."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dumps_compact(obj: Any) -> str:
    # Canonical one-line JSON; key order is taken from dict construction order
    # so records keep a stable, readable field order.
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: str, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_compact(rec))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str) -> Iterator[dict]:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
