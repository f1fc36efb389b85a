"""On-disk artifact container and CSV helpers.

Every binary artifact shares one layout (all integers little-endian):

    bytes 0..7    magic  b"OTFSPNP\\x00"
    bytes 8..11   uint32 header length in bytes
    header        UTF-8 JSON: {"version": 1, "kind": ..., "meta": {...},
                  "payload_len": int, "sha256": hex digest of the payload}
    payload       raw bytes, layout defined by the producing module

``kind`` is one of "weights", "dataset-spec", "config", "metrics".  The
checksum is verified on every read; unknown versions and wrong kinds are
rejected rather than reinterpreted.  Writes go through a temporary file in
the target directory followed by an atomic rename, so readers never observe
a partial artifact.

Metric tables are plain CSV with a leading version comment line; the helper
pair here keeps the column order stable and the write atomic.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile

MAGIC = b"OTFSPNP\x00"
FORMAT_VERSION = 1
KINDS = ("weights", "dataset-spec", "config", "metrics")
CSV_VERSION_LINE = "# otfspnp-metrics v1"

__all__ = [
    "ArtifactError",
    "write_artifact",
    "read_artifact",
    "write_config",
    "read_config",
    "write_csv",
    "read_csv",
]


class ArtifactError(ValueError):
    """Malformed, corrupted, or mismatching on-disk artifact."""


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-artifact-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_artifact(path: str, kind: str, meta: dict, payload: bytes = b"") -> None:
    """Serialize one artifact atomically."""
    if kind not in KINDS:
        raise ArtifactError(f"unknown artifact kind {kind!r}, expected one of {KINDS}")
    header = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "payload_len": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = MAGIC + len(head).to_bytes(4, "little") + head + payload
    _atomic_write(path, blob)


def read_artifact(path: str, expect_kind: str | None = None) -> tuple[str, dict, bytes]:
    """Read and validate an artifact; returns (kind, meta, payload)."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 4 or not blob.startswith(MAGIC):
        raise ArtifactError(f"{path}: not an artifact file (bad magic)")
    head_len = int.from_bytes(blob[8:12], "little")
    head_end = 12 + head_len
    if head_end > len(blob):
        raise ArtifactError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:head_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: unreadable header: {exc}") from exc
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: unsupported format version {version!r} (this build reads {FORMAT_VERSION})"
        )
    kind = header.get("kind")
    if kind not in KINDS:
        raise ArtifactError(f"{path}: unknown artifact kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ArtifactError(f"{path}: artifact kind is {kind!r}, expected {expect_kind!r}")
    payload = blob[head_end:]
    if len(payload) != header.get("payload_len"):
        raise ArtifactError(
            f"{path}: payload length {len(payload)} does not match header "
            f"{header.get('payload_len')}"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("sha256"):
        raise ArtifactError(f"{path}: payload checksum mismatch (corrupted file)")
    return kind, header.get("meta", {}), payload


def write_config(path: str, config: dict) -> None:
    write_artifact(path, "config", config)


def read_config(path: str) -> dict:
    _, meta, _ = read_artifact(path, expect_kind="config")
    return meta


def write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    """Metric table with a version comment line, written atomically."""
    buf = io.StringIO()
    buf.write(CSV_VERSION_LINE + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def read_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != CSV_VERSION_LINE:
            raise ArtifactError(f"{path}: missing metrics version line")
        return list(csv.DictReader(f))
