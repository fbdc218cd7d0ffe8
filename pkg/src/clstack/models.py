"""The five classification heads over frozen [CLS] stacks.

All heads consume a per-sample stack X of shape (n_layers, hidden), i.e.
the twelve 768-dim [CLS] vectors of a frozen 12-layer encoder, and emit a
probability distribution over classes:

* ``cnn-trans-enc``: three convolutional feature blocks generate the Q/K/V
  matrices of a two-layer transformer encoder (the second layer projects the
  vectorized multi-head output down to ``outdim``), then a linear softmax.
* ``trans-enc``: same encoder stack, but layer-1 Q/K/V come from plain
  linear projections of X.
* ``cnn-cls``: one convolutional feature block, vectorized, linear softmax.
* ``kim-cnn``: three single-channel convolutions (windows 5/10/15, stride 2)
  over the last [CLS] vector, adaptively pooled, linear softmax.
* ``softmax``: linear softmax on the last [CLS] vector.

Each convolutional feature block applies three filter banks of 4 filters
(length ``filter_length``, stride ``stride``) with tanh, adaptively
max-pools each 4-row map to ``d_m`` columns, and stacks the three maps into
a 12 x d_m matrix; dropout applies to that stacked output in training mode.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import ops
from .autodiff import Tensor

VARIANTS = ("cnn-trans-enc", "trans-enc", "cnn-cls", "kim-cnn", "softmax")
QKV_MODES = ("full", "literal")
GROUPS = ("cnn", "encoder", "head")

FILTERS_PER_BANK = 4
BANKS = ("h", "s", "v")
KIM_WINDOWS = (5, 10, 15)

CHECKPOINT_MAGIC = b"CLSP"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Model configuration violates an architectural invariant."""


class CheckpointError(ValueError):
    """A parameter checkpoint is malformed or inconsistent with its config."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by all heads."""

    n_classes: int
    variant: str = "cnn-trans-enc"
    d_m: int = 380
    outdim: int = 320
    heads: int = 20
    d_k: int = 19  # per-head dim; d_v == d_k
    filter_length: int = 5
    stride: int = 2
    dropout: float = 0.3
    qkv_mode: str = "full"
    n_layers: int = 12
    hidden: int = 768

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.qkv_mode not in QKV_MODES:
            raise ConfigError(f"unknown qkv_mode {self.qkv_mode!r}, expected one of {QKV_MODES}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if min(self.d_m, self.outdim, self.heads, self.d_k, self.filter_length, self.stride) < 1:
            raise ConfigError("all architecture extents must be positive")
        if self.heads * self.d_k != self.d_m:
            raise ConfigError(
                f"heads * d_k must equal d_m: {self.heads} * {self.d_k} != {self.d_m}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.outdim < self.n_classes:
            raise ConfigError(f"outdim {self.outdim} < n_classes {self.n_classes}")
        if self.filter_length > self.hidden:
            raise ConfigError(f"filter_length {self.filter_length} exceeds hidden {self.hidden}")
        if self.d_m > self.conv_len(self.filter_length):
            raise ConfigError(
                f"d_m {self.d_m} exceeds the pooled source length "
                f"{self.conv_len(self.filter_length)}"
            )
        if self.variant == "cnn-trans-enc" and self.n_layers != len(BANKS) * FILTERS_PER_BANK:
            raise ConfigError(
                f"cnn-trans-enc needs n_layers == {len(BANKS) * FILTERS_PER_BANK} "
                f"(stacked feature rows must match the residual), got {self.n_layers}"
            )

    def conv_len(self, window: int) -> int:
        """Output columns of a stride-``stride`` convolution over ``hidden``."""
        return (self.hidden - window) // self.stride + 1

    @property
    def attention_rows(self) -> int:
        """Row count of the matrices entering the encoder layers."""
        if self.variant == "trans-enc":
            return self.n_layers
        return len(BANKS) * FILTERS_PER_BANK

    def kim_pool_target(self, window: int) -> int:
        return min(self.d_m, self.conv_len(window))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**data)


class ParameterStore:
    """Named parameter tensors, each tagged with a learning-rate group."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}

    def add(self, name: str, tensor: Tensor, group: str) -> None:
        if group not in GROUPS:
            raise ConfigError(f"unknown parameter group {group!r}")
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._tensors[name] = tensor
        self._groups[name] = group

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def group(self, name: str) -> str:
        return self._groups[name]

    def items(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> dict[str, Tensor]:
        return dict(self._tensors)

    @property
    def n_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()


@dataclass
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    group: str
    init: str = "xavier"  # xavier | zeros | ones


def _cnn_block_specs(cfg: ModelConfig, replica: str) -> list[ParamSpec]:
    specs = []
    for bank in BANKS:
        if cfg.qkv_mode == "full":
            kshape = (FILTERS_PER_BANK, cfg.n_layers, cfg.filter_length)
            bshape = (FILTERS_PER_BANK,)
        else:  # literal: one shared 4 x l kernel, scalar bias
            kshape = (FILTERS_PER_BANK, cfg.filter_length)
            bshape = (1,)
        specs.append(ParamSpec(f"cnn.{replica}.{bank}.kernel", kshape, "cnn"))
        specs.append(ParamSpec(f"cnn.{replica}.{bank}.bias", bshape, "cnn", init="zeros"))
    return specs


def _attention_head_specs(cfg: ModelConfig, prefix: str) -> list[ParamSpec]:
    specs = []
    for idx in range(cfg.heads):
        for which in ("wq", "wk", "wv"):
            specs.append(
                ParamSpec(f"{prefix}.head{idx:02d}.{which}", (cfg.d_m, cfg.d_k), "encoder")
            )
    return specs


def _norm_specs(prefix: str, extent: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.gain", (extent,), "encoder", init="ones"),
        ParamSpec(f"{prefix}.shift", (extent,), "encoder", init="zeros"),
    ]


def parameter_catalog(cfg: ModelConfig) -> list[ParamSpec]:
    """Full list of (name, shape, group, init) for the configured variant."""
    specs: list[ParamSpec] = []
    rows = cfg.attention_rows

    if cfg.variant in ("cnn-trans-enc", "trans-enc"):
        if cfg.variant == "cnn-trans-enc":
            for replica in ("q", "k", "v"):
                specs += _cnn_block_specs(cfg, replica)
        else:
            for which in ("wq", "wk", "wv"):
                specs.append(ParamSpec(f"enc1.proj.{which}", (cfg.hidden, cfg.d_m), "encoder"))
        specs += _attention_head_specs(cfg, "enc1")
        specs.append(ParamSpec("enc1.wo", (cfg.d_m, cfg.hidden), "encoder"))
        specs += _norm_specs("enc1.ln1", cfg.hidden)
        specs += _norm_specs("enc1.ln2", cfg.hidden)
        for which in ("wq", "wk", "wv"):
            specs.append(ParamSpec(f"enc2.proj.{which}", (cfg.hidden, cfg.d_m), "encoder"))
        specs += _attention_head_specs(cfg, "enc2")
        specs.append(ParamSpec("enc2.wo", (rows * cfg.d_m, cfg.outdim), "encoder"))
        specs += _norm_specs("enc2.ln1", cfg.outdim)
        specs += _norm_specs("enc2.ln2", cfg.outdim)
        specs.append(ParamSpec("head.w", (cfg.outdim, cfg.n_classes), "head"))
    elif cfg.variant == "cnn-cls":
        specs += _cnn_block_specs(cfg, "feat")
        specs.append(
            ParamSpec("head.w", (len(BANKS) * FILTERS_PER_BANK * cfg.d_m, cfg.n_classes), "head")
        )
    elif cfg.variant == "kim-cnn":
        for window in KIM_WINDOWS:
            specs.append(ParamSpec(f"kim.w{window}.kernel", (1, 1, window), "cnn"))
            specs.append(ParamSpec(f"kim.w{window}.bias", (1,), "cnn", init="zeros"))
        feat_len = sum(cfg.kim_pool_target(w) for w in KIM_WINDOWS)
        specs.append(ParamSpec("head.w", (feat_len, cfg.n_classes), "head"))
    else:  # softmax
        specs.append(ParamSpec("head.w", (cfg.hidden, cfg.n_classes), "head"))
    return specs


def build_parameters(cfg: ModelConfig, rng: np.random.Generator | int = 0) -> ParameterStore:
    """Instantiate the catalog: Xavier weights, zero biases/shifts, unit gains."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    store = ParameterStore()
    for spec in parameter_catalog(cfg):
        if spec.init == "xavier":
            tensor = ops.xavier_init(spec.shape, rng)
        elif spec.init == "ones":
            tensor = Tensor(np.ones(spec.shape))
        else:
            tensor = Tensor(np.zeros(spec.shape))
        store.add(spec.name, tensor, spec.group)
    return store


def _trace(trace: dict | None, key: str, tensor: Tensor) -> None:
    if trace is not None:
        trace[key] = tensor


def cnn_cls_forward(
    x: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    replica: str = "q",
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """One convolutional feature block: X (n_layers, hidden) -> (12, d_m)."""
    maps = []
    for bank in BANKS:
        kernel = params[f"cnn.{replica}.{bank}.kernel"]
        bias = params[f"cnn.{replica}.{bank}.bias"]
        if cfg.qkv_mode == "full":
            fmap = ops.conv1d_strided(x, kernel, bias, cfg.stride)
        else:
            fmap = _literal_bank(x, kernel, bias, cfg)
        fmap = ops.tanh_map(fmap)
        _trace(trace, f"cnn.{replica}.{bank}.map", fmap)
        pooled = ops.adaptive_max_pool1d(fmap, cfg.d_m)
        _trace(trace, f"cnn.{replica}.{bank}.pooled", pooled)
        maps.append(pooled)
    stacked = ops.concat_rows(maps)
    out = ops.dropout_mask(stacked, cfg.dropout, rng, train)
    _trace(trace, f"qkv.{replica}", out)
    return out


def _literal_bank(x: Tensor, kernel: Tensor, bias: Tensor, cfg: ModelConfig) -> Tensor:
    """Literal reading of the filter equations: one shared (4, l) kernel slid
    over windows of 4 adjacent channels at offsets 0/4/8, zero-padded to 4 rows."""
    kernel3 = ops.reshape(kernel, (1, FILTERS_PER_BANK, cfg.filter_length))
    rows = []
    n = cfg.conv_len(cfg.filter_length)
    for offset in range(0, cfg.n_layers - FILTERS_PER_BANK + 1, FILTERS_PER_BANK):
        window = Tensor(x.data[offset : offset + FILTERS_PER_BANK])
        rows.append(ops.conv1d_strided(window, kernel3, bias, cfg.stride))
    rows.append(Tensor(np.zeros((FILTERS_PER_BANK - len(rows), n))))
    return ops.concat_rows(rows)


def multi_head_attention(
    q: Tensor, k: Tensor, v: Tensor, params: ParameterStore, cfg: ModelConfig, prefix: str = "enc1"
) -> Tensor:
    """Scaled-dot multi-head attention with output projection to ``hidden``."""
    concat = attention_concat(q, k, v, params, cfg, prefix)
    return ops.matmul(concat, params[f"{prefix}.wo"])


def attention_concat(
    q: Tensor, k: Tensor, v: Tensor, params: ParameterStore, cfg: ModelConfig, prefix: str
) -> Tensor:
    """Per-head attention outputs concatenated along the feature axis (rows, d_m)."""
    if cfg.heads * cfg.d_k != cfg.d_m:
        raise ConfigError(f"heads * d_k != d_m: {cfg.heads} * {cfg.d_k} != {cfg.d_m}")
    names = [f"{prefix}.head{idx:02d}" for idx in range(cfg.heads)]
    return ops.attention_heads(
        q,
        k,
        v,
        [params[f"{n}.wq"] for n in names],
        [params[f"{n}.wk"] for n in names],
        [params[f"{n}.wv"] for n in names],
    )


def encoder_layer1_forward(
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    trace: dict | None = None,
) -> Tensor:
    """Post-norm encoder layer with residuals: output matches the input shape."""
    att = multi_head_attention(q, k, v, params, cfg, "enc1")
    a = ops.layer_norm(ops.add(x, att), params["enc1.ln1.gain"], params["enc1.ln1.shift"])
    x0 = ops.layer_norm(
        ops.add(a, ops.tanh_map(a)), params["enc1.ln2.gain"], params["enc1.ln2.shift"]
    )
    _trace(trace, "enc1.out", x0)
    return x0


def encoder_layer2_forward(
    x0: Tensor, params: ParameterStore, cfg: ModelConfig, trace: dict | None = None
) -> Tensor:
    """Second encoder layer: vectorized multi-head output projected to ``outdim``.

    Q/K/V come from linear projections of the layer-1 output; the residual
    around the attention is dropped (the projection changes the shape).
    """
    q = ops.matmul(x0, params["enc2.proj.wq"])
    k = ops.matmul(x0, params["enc2.proj.wk"])
    v = ops.matmul(x0, params["enc2.proj.wv"])
    concat = attention_concat(q, k, v, params, cfg, "enc2")
    z = ops.vectorize(concat)
    _trace(trace, "enc2.z", z)
    m = ops.matmul(z, params["enc2.wo"])
    b = ops.layer_norm(m, params["enc2.ln1.gain"], params["enc2.ln1.shift"])
    out = ops.layer_norm(
        ops.add(b, ops.tanh_map(b)), params["enc2.ln2.gain"], params["enc2.ln2.shift"]
    )
    _trace(trace, "enc2.out", out)
    return out


def _head_softmax(features: Tensor, params: ParameterStore) -> Tensor:
    return ops.softmax_rows(ops.matmul(features, params["head.w"]))


def cnn_trans_enc_forward(
    x: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Full pipeline: three conv blocks -> 2 encoder layers -> linear softmax."""
    qc = cnn_cls_forward(x, params, cfg, "q", train, rng, trace)
    kc = cnn_cls_forward(x, params, cfg, "k", train, rng, trace)
    vc = cnn_cls_forward(x, params, cfg, "v", train, rng, trace)
    x0 = encoder_layer1_forward(x, qc, kc, vc, params, cfg, trace)
    out = encoder_layer2_forward(x0, params, cfg, trace)
    return _head_softmax(out, params)


def trans_enc_forward(
    x: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Encoder baseline: layer-1 Q/K/V are linear projections of the stack."""
    q = ops.matmul(x, params["enc1.proj.wq"])
    k = ops.matmul(x, params["enc1.proj.wk"])
    v = ops.matmul(x, params["enc1.proj.wv"])
    for name, t in (("q", q), ("k", k), ("v", v)):
        _trace(trace, f"qkv.{name}", t)
    x0 = encoder_layer1_forward(x, q, k, v, params, cfg, trace)
    out = encoder_layer2_forward(x0, params, cfg, trace)
    return _head_softmax(out, params)


def cnn_cls_classifier_forward(
    x: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Standalone conv-block classifier: pooled features -> linear softmax."""
    feats = cnn_cls_forward(x, params, cfg, "feat", train, rng, trace)
    z = ops.vectorize(feats)
    _trace(trace, "features", z)
    return _head_softmax(z, params)


def kim_cnn_forward(
    x: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Window-5/10/15 convolutions over the last [CLS] vector, pooled + softmax."""
    row = Tensor(x.data.reshape(1, -1))
    parts = []
    for window in KIM_WINDOWS:
        fmap = ops.conv1d_strided(
            row, params[f"kim.w{window}.kernel"], params[f"kim.w{window}.bias"], cfg.stride
        )
        fmap = ops.tanh_map(fmap)
        _trace(trace, f"kim.w{window}.map", fmap)
        pooled = ops.adaptive_max_pool1d(fmap, cfg.kim_pool_target(window))
        _trace(trace, f"kim.w{window}.pooled", pooled)
        parts.append(ops.vectorize(pooled))
    feats = ops.concat_rows(parts)
    _trace(trace, "features", feats)
    return _head_softmax(feats, params)


def softmax_head_forward(x: Tensor, params: ParameterStore) -> Tensor:
    """Linear map plus softmax on a single [CLS] vector."""
    return _head_softmax(x, params)


def predict_proba(
    stack: Tensor,
    params: ParameterStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Dispatch a (n_layers, hidden) stack to the configured head."""
    if stack.shape != (cfg.n_layers, cfg.hidden):
        raise ConfigError(f"expected stack of shape ({cfg.n_layers}, {cfg.hidden}), got {stack.shape}")
    if cfg.variant == "cnn-trans-enc":
        return cnn_trans_enc_forward(stack, params, cfg, train, rng, trace)
    if cfg.variant == "trans-enc":
        return trans_enc_forward(stack, params, cfg, train, rng, trace)
    if cfg.variant == "cnn-cls":
        return cnn_cls_classifier_forward(stack, params, cfg, train, rng, trace)
    last = Tensor(stack.data[cfg.n_layers - 1])
    if cfg.variant == "kim-cnn":
        return kim_cnn_forward(last, params, cfg, train, rng, trace)
    return softmax_head_forward(last, params)


def save_checkpoint(path: str | Path, params: ParameterStore, cfg: ModelConfig) -> None:
    """Write parameters to the CLSP binary layout (f32 payload, little-endian)."""
    config_blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    variant_blob = cfg.variant.encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(variant_blob)))
        fh.write(variant_blob)
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params.items():
            name_blob = name.encode()
            fh.write(struct.pack("<I", len(name_blob)))
            fh.write(name_blob)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ParameterStore, ModelConfig]:
    """Read a CLSP checkpoint; validates names and shapes against the catalog."""
    with open(path, "rb") as fh:
        payload = fh.read()

    def take(n: int, offset: int) -> tuple[bytes, int]:
        if offset + n > len(payload):
            raise CheckpointError("checkpoint truncated")
        return payload[offset : offset + n], offset + n

    blob, off = take(4, 0)
    if blob != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob!r}")
    blob, off = take(4, off)
    version = struct.unpack("<I", blob)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    blob, off = take(4, off)
    variant_len = struct.unpack("<I", blob)[0]
    variant_blob, off = take(variant_len, off)
    blob, off = take(4, off)
    config_len = struct.unpack("<I", blob)[0]
    config_blob, off = take(config_len, off)
    cfg = ModelConfig.from_dict(json.loads(config_blob.decode()))
    if cfg.variant != variant_blob.decode():
        raise CheckpointError("variant id disagrees with the embedded config")

    blob, off = take(4, off)
    n_tensors = struct.unpack("<I", blob)[0]
    catalog = {spec.name: spec for spec in parameter_catalog(cfg)}
    store = ParameterStore()
    for _ in range(n_tensors):
        blob, off = take(4, off)
        name_len = struct.unpack("<I", blob)[0]
        name_blob, off = take(name_len, off)
        name = name_blob.decode()
        blob, off = take(4, off)
        ndim = struct.unpack("<I", blob)[0]
        blob, off = take(4 * ndim, off)
        shape = struct.unpack(f"<{ndim}I", blob)
        count = int(np.prod(shape)) if shape else 1
        blob, off = take(4 * count, off)
        data = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float64)
        if name not in catalog:
            raise CheckpointError(f"checkpoint tensor {name!r} not in the {cfg.variant} catalog")
        if tuple(shape) != tuple(catalog[name].shape):
            raise CheckpointError(
                f"tensor {name!r} shape {shape} != catalog shape {catalog[name].shape}"
            )
        store.add(name, Tensor(data), catalog[name].group)
    missing = set(catalog) - set(store.names())
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    return store, cfg
