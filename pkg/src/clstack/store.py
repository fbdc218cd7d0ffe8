"""On-disk format and generators for labeled [CLS]-stack datasets.

A dataset holds one (n_layers, hidden) float32 matrix per sample (the
per-layer [CLS] vectors of a frozen 12-layer encoder) plus an integer class
label.  The CLSB binary layout (all integers little-endian):

    bytes 0-3    magic "CLSB"
    bytes 4-7    version,   u32 = 1
    bytes 8-11   n_layers,  u32
    bytes 12-15  hidden,    u32
    bytes 16-19  n_classes, u32
    bytes 20-27  n_samples, u64
    bytes 28-31  reserved,  u32 = 0
    labels       n_samples x u32
    payload      n_samples x n_layers x hidden float32,
                 sample-major, layer-major, row-major

A JSON manifest sidecar ``<path>.manifest.json`` records provenance and a
SHA-256 checksum of the complete binary file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

MAGIC = b"CLSB"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQI")  # magic, version, n_layers, hidden, n_classes, n_samples, reserved
assert HEADER.size == 32


class FormatError(ValueError):
    """The file is not a CLSB file of a supported version/geometry."""


class CorruptionError(ValueError):
    """The file header is valid but the byte counts do not add up."""


class ValidationError(ValueError):
    """Dataset invariants are violated (labels, extents, finiteness)."""


@dataclass
class Manifest:
    """Provenance sidecar for a CLSB file."""

    name: str
    source: str
    model_id: str
    max_length: int
    sha256: str
    created_at: str

    def write(self, path: str | Path) -> Path:
        out = manifest_path(path)
        out.write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")
        return out

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        doc = json.loads(manifest_path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})


def manifest_path(dataset_path: str | Path) -> Path:
    return Path(str(dataset_path) + ".manifest.json")


@dataclass
class EmbeddingDataset:
    """In-memory labeled [CLS]-stack dataset."""

    stacks: np.ndarray  # (n_samples, n_layers, hidden) float32
    labels: np.ndarray  # (n_samples,) integers in [0, n_classes)
    n_classes: int

    @property
    def n_samples(self) -> int:
        return self.stacks.shape[0]

    @property
    def n_layers(self) -> int:
        return self.stacks.shape[1]

    @property
    def hidden(self) -> int:
        return self.stacks.shape[2]

    def validate(self) -> None:
        if self.stacks.ndim != 3:
            raise ValidationError(f"stacks must be (n, layers, hidden), got {self.stacks.shape}")
        if self.labels.shape != (self.n_samples,):
            raise ValidationError(
                f"labels extent {self.labels.shape} does not match {self.n_samples} samples"
            )
        if self.n_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_samples and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValidationError(
                f"labels outside [0, {self.n_classes}): "
                f"min={self.labels.min()}, max={self.labels.max()}"
            )
        if not np.all(np.isfinite(self.stacks)):
            raise ValidationError("non-finite embedding values")

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels.astype(np.int64), minlength=self.n_classes)


def expected_file_size(n_samples: int, n_layers: int, hidden: int) -> int:
    return HEADER.size + 4 * n_samples + 4 * n_samples * n_layers * hidden


def write_dataset(
    ds: EmbeddingDataset,
    path: str | Path,
    name: str | None = None,
    source: str = "unspecified",
    model_id: str = "none",
    max_length: int = 0,
) -> Manifest:
    """Write ``ds`` to ``path`` in CLSB layout and emit the manifest sidecar."""
    ds.validate()
    path = Path(path)
    digest = hashlib.sha256()

    header = HEADER.pack(MAGIC, VERSION, ds.n_layers, ds.hidden, ds.n_classes, ds.n_samples, 0)
    labels = np.ascontiguousarray(ds.labels, dtype="<u4").tobytes()
    payload = np.ascontiguousarray(ds.stacks, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        for chunk in (header, labels, payload):
            fh.write(chunk)
            digest.update(chunk)

    manifest = Manifest(
        name=name if name is not None else path.stem,
        source=source,
        model_id=model_id,
        max_length=max_length,
        sha256=digest.hexdigest(),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    manifest.write(path)
    return manifest


def read_header(path: str | Path) -> tuple[int, int, int, int]:
    """Validate the 32-byte header; returns (n_layers, hidden, n_classes, n_samples)."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise FormatError(f"file too short for a CLSB header: {len(raw)} bytes")
    magic, version, n_layers, hidden, n_classes, n_samples, reserved = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    if reserved != 0:
        raise FormatError(f"reserved header word must be 0, got {reserved}")
    if n_layers < 1 or hidden < 1 or n_classes < 2:
        raise FormatError(
            f"implausible geometry: n_layers={n_layers}, hidden={hidden}, n_classes={n_classes}"
        )
    return n_layers, hidden, n_classes, n_samples


def read_dataset(path: str | Path, mmap: bool = False) -> EmbeddingDataset:
    """Read a CLSB file; with ``mmap`` the payload is a read-only memory map."""
    path = Path(path)
    n_layers, hidden, n_classes, n_samples = read_header(path)

    expected = expected_file_size(n_samples, n_layers, hidden)
    actual = path.stat().st_size
    if actual != expected:
        raise CorruptionError(
            f"payload size mismatch: expected {expected} bytes for "
            f"{n_samples} samples, found {actual}"
        )

    with open(path, "rb") as fh:
        fh.seek(HEADER.size)
        labels = np.frombuffer(fh.read(4 * n_samples), dtype="<u4").astype(np.int64)
    if mmap:
        stacks = np.memmap(
            path,
            dtype="<f4",
            mode="r",
            offset=HEADER.size + 4 * n_samples,
            shape=(n_samples, n_layers, hidden),
        )
    else:
        with open(path, "rb") as fh:
            fh.seek(HEADER.size + 4 * n_samples)
            stacks = np.fromfile(fh, dtype="<f4").reshape(n_samples, n_layers, hidden)

    ds = EmbeddingDataset(stacks=stacks, labels=labels, n_classes=n_classes)
    ds.validate()
    return ds


def file_checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def synth_generate(
    n_samples: int,
    n_classes: int,
    n_layers: int = 12,
    hidden: int = 768,
    separation: float = 1.0,
    seed: int = 0,
) -> EmbeddingDataset:
    """Labeled synthetic stacks: class direction plus per-layer Gaussian noise.

    Each class gets a fixed unit-norm direction (seeded); a sample of class c
    is ``separation * u_c`` broadcast across all layers plus independent
    standard-normal noise per layer.  Labels are balanced within +/-1.
    """
    if n_classes < 2:
        raise ValidationError(f"need at least 2 classes, got {n_classes}")
    if n_samples < n_classes:
        raise ValidationError(f"need n_samples >= n_classes, got {n_samples} < {n_classes}")
    if separation < 0:
        raise ValidationError(f"separation must be nonnegative, got {separation}")

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n_classes, hidden))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    rng.shuffle(labels)

    noise = rng.standard_normal((n_samples, n_layers, hidden), dtype=np.float32)
    means = (separation * directions[labels]).astype(np.float32)
    stacks = noise + means[:, None, :]
    return EmbeddingDataset(stacks=stacks, labels=labels, n_classes=n_classes)
