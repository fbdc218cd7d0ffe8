"""Run a frozen 12-layer encoder over a labeled corpus and export [CLS] stacks.

The encoder is used purely as a feature extractor: for every text we keep the
position-0 hidden vector of each of the 12 transformer layers (the embedding
layer's output is excluded), stacked bottom-to-top into a (12, 768) matrix.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import clsb

log = logging.getLogger("clstx")

REQUIRED_LAYERS = 12
REQUIRED_HIDDEN = 768


class ConfigError(ValueError):
    """The corpus spec or the resolved model violates a requirement."""


@dataclass
class CorpusSpec:
    """Where the texts live and which encoder turns them into stacks."""

    input_path: str
    text_field: str = "text"
    label_field: str = "label"
    labels: list[str] | None = None  # discovered (sorted) when absent
    max_length: int = 512
    model_id: str = "bert-base-uncased"


@dataclass
class VerifyResult:
    passed: bool
    checked: list[int] = field(default_factory=list)
    mismatches: list[int] = field(default_factory=list)
    detail: str = ""


def load_corpus(spec: CorpusSpec) -> tuple[list[str], list[str], list[int]]:
    """Read texts/labels from CSV or JSONL; returns (texts, labels, skipped rows)."""
    path = Path(spec.input_path)
    if not path.exists():
        raise ConfigError(f"corpus not found: {path}")
    rows: list[dict] = []
    if path.suffix.lower() == ".jsonl":
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                rows.append(json.loads(line) if line else {})
    else:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))

    texts, labels, skipped = [], [], []
    for idx, row in enumerate(rows):
        text = row.get(spec.text_field)
        label = row.get(spec.label_field)
        if not text or label is None or str(label) == "":
            skipped.append(idx)
            continue
        texts.append(str(text))
        labels.append(str(label))
    if skipped:
        log.warning("skipped %d unreadable rows: %s", len(skipped), skipped)
    if not texts:
        raise ConfigError("corpus has no readable rows")
    return texts, labels, skipped


def resolve_labels(raw: list[str], supplied: list[str] | None) -> tuple[np.ndarray, list[str]]:
    """Map label strings to contiguous ids; discovered vocabularies are sorted."""
    vocab = list(supplied) if supplied is not None else sorted(set(raw))
    index = {name: i for i, name in enumerate(vocab)}
    unknown = sorted({r for r in raw if r not in index})
    if unknown:
        raise ConfigError(f"labels outside the supplied vocabulary: {unknown}")
    return np.array([index[r] for r in raw], dtype=np.int64), vocab


class StackEncoder:
    """Frozen encoder + tokenizer producing (12, 768) stacks per text."""

    def __init__(self, spec: CorpusSpec):
        from transformers import AutoModel, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(spec.model_id)
        self.model = AutoModel.from_pretrained(spec.model_id)
        cfg = self.model.config
        if cfg.num_hidden_layers != REQUIRED_LAYERS or cfg.hidden_size != REQUIRED_HIDDEN:
            raise ConfigError(
                f"model {spec.model_id!r} has {cfg.num_hidden_layers} layers / "
                f"{cfg.hidden_size} hidden; need {REQUIRED_LAYERS} / {REQUIRED_HIDDEN}"
            )
        self.model.eval()
        self.max_length = spec.max_length

    @torch.no_grad()
    def encode(self, texts: list[str]) -> np.ndarray:
        """(batch, 12, 768) float32 position-0 vectors, embedding layer excluded."""
        enc = self.tokenizer(
            texts,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_length,
        )
        out = self.model(**enc, output_hidden_states=True)
        layers = torch.stack(out.hidden_states[1:], dim=1)  # (batch, 12, seq, hidden)
        return layers[:, :, 0, :].to(torch.float32).cpu().numpy()


def extract(spec: CorpusSpec, out_path: str | Path, batch_size: int = 32) -> dict:
    """Extract the whole corpus to ``out_path`` (CLSB) plus its manifest.

    Returns a summary dict with sample counts, the label vocabulary, and the
    file checksum.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    texts, raw_labels, skipped = load_corpus(spec)
    labels, vocab = resolve_labels(raw_labels, spec.labels)
    if len(vocab) < 2:
        raise ConfigError(f"need at least 2 classes, found {vocab}")
    encoder = StackEncoder(spec)

    stacks = np.empty((len(texts), REQUIRED_LAYERS, REQUIRED_HIDDEN), dtype=np.float32)
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        stacks[start : start + len(batch)] = encoder.encode(batch)
        log.info("encoded %d/%d", min(start + batch_size, len(texts)), len(texts))

    sha = clsb.write_clsb(out_path, stacks, labels, n_classes=len(vocab))
    clsb.write_manifest(
        out_path,
        name=Path(out_path).stem,
        source=str(spec.input_path),
        model_id=spec.model_id,
        max_length=spec.max_length,
        sha256=sha,
        labels=vocab,
        skipped_rows=skipped,
    )
    return {
        "n_samples": len(texts),
        "n_classes": len(vocab),
        "labels": vocab,
        "skipped_rows": skipped,
        "sha256": sha,
        "out": str(out_path),
    }


def verify(
    clsb_path: str | Path,
    spec: CorpusSpec,
    sample_count: int,
    seed: int = 0,
    atol: float = 1e-4,
) -> VerifyResult:
    """Re-extract a random sample of rows and compare against the stored stacks.

    ``sample_count = 0`` performs header-and-size validation only.
    """
    header = clsb.read_header(clsb_path)
    if header["n_layers"] != REQUIRED_LAYERS or header["hidden"] != REQUIRED_HIDDEN:
        return VerifyResult(False, detail=f"unexpected geometry {header}")
    if sample_count == 0:
        return VerifyResult(True, detail="header-only validation")

    stored, stored_labels, _ = clsb.read_stacks(clsb_path)
    if not np.all(np.isfinite(stored)):
        return VerifyResult(False, detail="stored payload contains non-finite values")

    texts, raw_labels, _ = load_corpus(spec)
    labels, vocab = resolve_labels(raw_labels, spec.labels)
    if len(texts) != header["n_samples"]:
        return VerifyResult(
            False, detail=f"corpus rows {len(texts)} != stored samples {header['n_samples']}"
        )

    rng = np.random.default_rng(seed)
    count = min(sample_count, len(texts))
    picked = sorted(rng.choice(len(texts), size=count, replace=False).tolist())
    encoder = StackEncoder(spec)
    fresh = encoder.encode([texts[i] for i in picked])

    mismatches = []
    for row, idx in enumerate(picked):
        if int(labels[idx]) != int(stored_labels[idx]):
            mismatches.append(idx)
        elif not np.allclose(fresh[row], stored[idx], atol=atol):
            mismatches.append(idx)
    if mismatches:
        return VerifyResult(False, checked=picked, mismatches=mismatches,
                            detail=f"{len(mismatches)} rows disagree")
    return VerifyResult(True, checked=picked)
