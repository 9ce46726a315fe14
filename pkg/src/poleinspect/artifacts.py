"""Checksummed, versioned artifact container.

An artifact file is two lines: a JSON header (format, version, kind, optional
descriptive fields, and a SHA-256) followed by the canonical JSON body.  The
checksum covers the header fields as well as the body.  Canonical means
sorted keys, no whitespace and shortest-repr floats, so save -> load -> save
reproduces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import ChecksumError, FormatVersionError

FORMAT_NAME = "poleinspect-artifact"
FORMAT_VERSION = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def _checksum(header: dict, body: bytes) -> str:
    fields = {k: v for k, v in header.items() if k != "sha256"}
    return sha256_bytes(canonical_json(fields).encode() + b"\n" + body)


def dumps(kind: str, payload: dict, info: dict | None = None) -> bytes:
    body = canonical_json(payload).encode()
    header = {"format": FORMAT_NAME, "kind": kind, "version": FORMAT_VERSION}
    if info:
        header["info"] = info
    header["sha256"] = _checksum(header, body)
    return canonical_json(header).encode() + b"\n" + body + b"\n"


def loads(data: bytes, expected_kind: str | None = None) -> tuple[str, dict]:
    try:
        head, body, *rest = data.split(b"\n")
        header = json.loads(head)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ChecksumError(f"unreadable artifact header: {exc}") from exc
    if rest not in ([], [b""]) or not isinstance(header, dict):
        raise ChecksumError("artifact has trailing garbage or a malformed header")
    if header.get("format") != FORMAT_NAME:
        raise FormatVersionError(f"not a {FORMAT_NAME} file (format={header.get('format')!r})")
    if header.get("version") != FORMAT_VERSION:
        raise FormatVersionError(f"artifact version {header.get('version')!r}, expected {FORMAT_VERSION}")
    if _checksum(header, body) != header.get("sha256"):
        raise ChecksumError("artifact content does not match its checksum")
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise FormatVersionError(f"expected a {expected_kind!r} artifact, got {kind!r}")
    try:
        payload = json.loads(body)
    except ValueError as exc:  # pragma: no cover - checksum already matched
        raise ChecksumError(str(exc)) from exc
    return kind, payload


def write(path: str | Path, kind: str, payload: dict, info: dict | None = None) -> str:
    data = dumps(kind, payload, info)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return sha256_bytes(data)


def read(path: str | Path, expected_kind: str | None = None) -> tuple[str, dict]:
    return loads(Path(path).read_bytes(), expected_kind)
