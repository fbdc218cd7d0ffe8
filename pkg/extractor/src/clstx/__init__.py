"""Offline extraction of per-layer [CLS] stacks into the CLSB format."""

from .extract import ConfigError, CorpusSpec, StackEncoder, VerifyResult, extract, verify

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorpusSpec",
    "StackEncoder",
    "VerifyResult",
    "extract",
    "verify",
    "__version__",
]
