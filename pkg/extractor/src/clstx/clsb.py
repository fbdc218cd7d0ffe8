"""Standalone CLSB writer/validator.

Implements the CLSB byte layout consumed by the training side (all integers
little-endian):

    bytes 0-3    magic "CLSB"
    bytes 4-7    version,   u32 = 1
    bytes 8-11   n_layers,  u32
    bytes 12-15  hidden,    u32
    bytes 16-19  n_classes, u32
    bytes 20-27  n_samples, u64
    bytes 28-31  reserved,  u32 = 0
    labels       n_samples x u32
    payload      n_samples x n_layers x hidden float32 (sample-major)

plus the ``<path>.manifest.json`` sidecar carrying provenance and a SHA-256
of the binary file.  This module deliberately does not import the consumer
package; the byte layout is the only contract shared with it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MAGIC = b"CLSB"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQI")


class ClsbError(ValueError):
    """The file violates the CLSB layout."""


def write_clsb(path: str | Path, stacks: np.ndarray, labels: np.ndarray, n_classes: int) -> str:
    """Write stacks/labels to ``path``; returns the SHA-256 of the file."""
    n, n_layers, hidden = stacks.shape
    if labels.shape != (n,):
        raise ClsbError(f"labels extent {labels.shape} does not match {n} samples")
    if n and (labels.min() < 0 or labels.max() >= n_classes):
        raise ClsbError(f"labels outside [0, {n_classes})")
    if not np.all(np.isfinite(stacks)):
        raise ClsbError("non-finite embedding values")

    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        for chunk in (
            HEADER.pack(MAGIC, VERSION, n_layers, hidden, n_classes, n, 0),
            np.ascontiguousarray(labels, dtype="<u4").tobytes(),
            np.ascontiguousarray(stacks, dtype="<f4").tobytes(),
        ):
            fh.write(chunk)
            digest.update(chunk)
    return digest.hexdigest()


def read_header(path: str | Path) -> dict:
    """Validate the header and byte counts; returns the header fields."""
    path = Path(path)
    raw = path.read_bytes()[: HEADER.size]
    if len(raw) < HEADER.size:
        raise ClsbError(f"file too short for a CLSB header: {len(raw)} bytes")
    magic, version, n_layers, hidden, n_classes, n_samples, reserved = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ClsbError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ClsbError(f"unsupported version {version}")
    if reserved != 0:
        raise ClsbError("reserved header word must be 0")
    expected = HEADER.size + 4 * n_samples + 4 * n_samples * n_layers * hidden
    actual = path.stat().st_size
    if actual != expected:
        raise ClsbError(f"size mismatch: expected {expected} bytes, found {actual}")
    return {
        "n_layers": n_layers,
        "hidden": hidden,
        "n_classes": n_classes,
        "n_samples": n_samples,
    }


def read_stacks(path: str | Path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read back (stacks, labels, header); used by the verification pass."""
    header = read_header(path)
    n, n_layers, hidden = header["n_samples"], header["n_layers"], header["hidden"]
    blob = Path(path).read_bytes()
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=HEADER.size).astype(np.int64)
    stacks = np.frombuffer(blob, dtype="<f4", offset=HEADER.size + 4 * n).reshape(
        n, n_layers, hidden
    )
    return stacks, labels, header


def write_manifest(
    path: str | Path,
    name: str,
    source: str,
    model_id: str,
    max_length: int,
    sha256: str,
    labels: list[str],
    skipped_rows: list[int],
) -> Path:
    manifest = {
        "name": name,
        "source": source,
        "model_id": model_id,
        "max_length": max_length,
        "sha256": sha256,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "labels": labels,
        "layer_order": "bottom-to-top",
        "skipped_rows": skipped_rows,
    }
    out = Path(f"{path}.manifest.json")
    out.write_text(json.dumps(manifest, indent=2) + "\n")
    return out
