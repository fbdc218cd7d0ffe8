"""Differentiable operations over :class:`~clstack.autodiff.Tensor`.

Every operation computes its forward result eagerly (numpy / compiled
kernels) and, when a tape is active and some input requires gradients,
records a backward closure.  Without an active tape the operations run as
plain numerics, which is how evaluation-mode inference works.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .autodiff import ShapeError, Tensor, active_tape


def _result(data: np.ndarray, *inputs: Tensor) -> Tensor:
    return Tensor(data, requires_grad=any(t.requires_grad for t in inputs))


def _record(out: Tensor, backward) -> None:
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands with numpy contraction rules."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or (a.ndim == 1 and b.ndim == 1):
        raise ShapeError(f"matmul: unsupported operand ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ: {a.shape} @ {b.shape}")
    out = _result(a.data @ b.data, a, b)

    def backward(g):
        if a.ndim == 2 and b.ndim == 2:
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        elif a.ndim == 1:  # (k,) @ (k,n) -> (n,)
            if a.requires_grad:
                a.accumulate_grad(b.data @ g)
            if b.requires_grad:
                b.accumulate_grad(np.outer(a.data, g))
        else:  # (m,k) @ (k,) -> (m,)
            if a.requires_grad:
                a.accumulate_grad(np.outer(g, b.data))
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)

    _record(out, backward)
    return out


def transpose(x: Tensor) -> Tensor:
    """Swap the two axes of a matrix."""
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")
    out = _result(x.data.T.copy(), x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.T)

    _record(out, backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ: {a.shape} vs {b.shape}")
    out = _result(a.data + b.data, a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    _record(out, backward)
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply every element by a constant."""
    out = _result(x.data * factor, x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * factor)

    _record(out, backward)
    return out


def conv1d_strided(x: Tensor, weights: Tensor, bias: Tensor, stride: int) -> Tensor:
    """Strided cross-correlation of a (c_in, L) signal with (c_out, c_in, l) kernels.

    Output extent is floor((L - l) / stride) + 1; no activation is applied.
    """
    if not isinstance(stride, int) or stride < 1:
        raise ValueError(f"conv1d_strided: stride must be a positive integer, got {stride!r}")
    if x.ndim != 2 or weights.ndim != 3 or bias.ndim != 1:
        raise ShapeError(
            f"conv1d_strided: expected input (c_in, L), kernels (c_out, c_in, l), bias (c_out,); "
            f"got {x.shape}, {weights.shape}, {bias.shape}"
        )
    c_in, length = x.shape
    c_out, k_cin, klen = weights.shape
    if k_cin != c_in:
        raise ShapeError(f"conv1d_strided: kernel channels {k_cin} != input channels {c_in}")
    if bias.shape[0] != c_out:
        raise ShapeError(f"conv1d_strided: bias extent {bias.shape[0]} != filter count {c_out}")
    if klen > length:
        raise ShapeError(f"conv1d_strided: kernel length {klen} exceeds input length {length}")

    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(weights.data)
    out = _result(kernels.conv1d_forward(xd, wd, np.ascontiguousarray(bias.data), stride), x, weights, bias)

    def backward(g):
        gx, gw, gb = kernels.conv1d_backward(xd, wd, stride, np.ascontiguousarray(g))
        if x.requires_grad:
            x.accumulate_grad(gx)
        if weights.requires_grad:
            weights.accumulate_grad(gw)
        if bias.requires_grad:
            bias.accumulate_grad(gb)

    _record(out, backward)
    return out


def adaptive_max_pool1d(x: Tensor, target: int) -> Tensor:
    """Max-pool each row of a (c, L) map into ``target`` adaptive bins.

    Bin i covers column indices [floor(i*L/target), ceil((i+1)*L/target)); the
    gradient routes to each bin's first maximal index.
    """
    if x.ndim != 2:
        raise ShapeError(f"adaptive_max_pool1d: expected a (c, L) map, got shape {x.shape}")
    length = x.shape[1]
    if not isinstance(target, int) or target < 1:
        raise ValueError(f"adaptive_max_pool1d: target must be a positive integer, got {target!r}")
    if target > length:
        raise ShapeError(f"adaptive_max_pool1d: target {target} exceeds input length {length}")

    pooled, argmax = kernels.maxpool_forward(np.ascontiguousarray(x.data), target)
    out = _result(pooled, x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(kernels.maxpool_backward(argmax, np.ascontiguousarray(g), length))

    _record(out, backward)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by per-row max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _result(y, x)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            x.accumulate_grad(y * (g - dot))

    _record(out, backward)
    return out


def attention_heads(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    wq: list[Tensor],
    wk: list[Tensor],
    wv: list[Tensor],
) -> Tensor:
    """Scaled-dot attention per head, concatenated along the feature axis.

    head_i = softmax(q@wq_i (k@wk_i)^T / sqrt(d_k)) (v@wv_i); the result is
    the (rows, n_heads*d_k) concatenation.  Mathematically identical to
    composing matmul/transpose/scale/softmax_rows per head, but recorded as a
    single taped operation to keep the training loop off the op-dispatch
    floor.
    """
    n_heads = len(wq)
    if not (len(wk) == len(wv) == n_heads and n_heads >= 1):
        raise ShapeError("attention_heads: need equal, nonzero head weight counts")
    d_k = wq[0].shape[1]
    inv_scale = 1.0 / math.sqrt(d_k)
    qd, kd, vd = q.data, k.data, v.data

    qh, kh, vh, att = [], [], [], []
    outputs = []
    for i in range(n_heads):
        qi = qd @ wq[i].data
        ki = kd @ wk[i].data
        vi = vd @ wv[i].data
        scores = (qi @ ki.T) * inv_scale
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        a = e / e.sum(axis=1, keepdims=True)
        qh.append(qi)
        kh.append(ki)
        vh.append(vi)
        att.append(a)
        outputs.append(a @ vi)
    out = _result(np.concatenate(outputs, axis=1), q, k, v, *wq, *wk, *wv)

    def backward(g):
        gq = np.zeros_like(qd) if q.requires_grad else None
        gk = np.zeros_like(kd) if k.requires_grad else None
        gv = np.zeros_like(vd) if v.requires_grad else None
        for i in range(n_heads):
            gh = g[:, i * d_k : (i + 1) * d_k]
            ga = gh @ vh[i].T
            gvi = att[i].T @ gh
            gs = att[i] * (ga - (ga * att[i]).sum(axis=1, keepdims=True)) * inv_scale
            gqi = gs @ kh[i]
            gki = gs.T @ qh[i]
            if gq is not None:
                gq += gqi @ wq[i].data.T
            if gk is not None:
                gk += gki @ wk[i].data.T
            if gv is not None:
                gv += gvi @ wv[i].data.T
            if wq[i].requires_grad:
                wq[i].accumulate_grad(qd.T @ gqi)
            if wk[i].requires_grad:
                wk[i].accumulate_grad(kd.T @ gki)
            if wv[i].requires_grad:
                wv[i].accumulate_grad(vd.T @ gvi)
        if gq is not None:
            q.accumulate_grad(gq)
        if gk is not None:
            k.accumulate_grad(gk)
        if gv is not None:
            v.accumulate_grad(gv)

    _record(out, backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to zero mean / unit variance, then affine map.

    Accepts a matrix (each row normalized independently) or a vector (treated
    as one row); ``gain`` and ``shift`` have the row extent.
    """
    if eps <= 0:
        raise ValueError(f"layer_norm: eps must be positive, got {eps!r}")
    if x.ndim not in (1, 2):
        raise ShapeError(f"layer_norm: expected vector or matrix, got shape {x.shape}")
    n = x.shape[-1]
    if gain.shape != (n,) or shift.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/shift extents {gain.shape}/{shift.shape} do not match row length {n}"
        )

    x2 = x.data.reshape(-1, n)
    mean = x2.mean(axis=1, keepdims=True)
    var = x2.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    norm = (x2 - mean) * inv_std
    out = _result((norm * gain.data + shift.data).reshape(x.shape), x, gain, shift)

    def backward(g):
        g2 = g.reshape(-1, n)
        if gain.requires_grad:
            gain.accumulate_grad((g2 * norm).sum(axis=0))
        if shift.requires_grad:
            shift.accumulate_grad(g2.sum(axis=0))
        if x.requires_grad:
            gn = g2 * gain.data
            dx = inv_std * (
                gn
                - gn.mean(axis=1, keepdims=True)
                - norm * (gn * norm).mean(axis=1, keepdims=True)
            )
            x.accumulate_grad(dx.reshape(x.shape))

    _record(out, backward)
    return out


def tanh_map(x: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent."""
    y = np.tanh(x.data)
    out = _result(y, x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - y * y))

    _record(out, backward)
    return out


def dropout_mask(x: Tensor, ratio: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero each element with probability ``ratio`` and scale
    survivors by 1/(1-ratio); identity when ``training`` is False or ratio is 0."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"dropout_mask: ratio must be in [0, 1), got {ratio!r}")
    if not training or ratio == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout_mask: training mode with ratio > 0 needs a generator")
    keep = (rng.random(x.shape) >= ratio) / (1.0 - ratio)
    out = _result(x.data * keep, x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep)

    _record(out, backward)
    return out


def concat_rows(parts: list[Tensor]) -> Tensor:
    """Stack tensors along the first axis; trailing extents must agree."""
    if not parts:
        raise ShapeError("concat_rows: no inputs")
    tail = parts[0].shape[1:]
    for p in parts[1:]:
        if p.shape[1:] != tail:
            raise ShapeError(
                f"concat_rows: trailing extents differ: {parts[0].shape} vs {p.shape}"
            )
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=0),
        requires_grad=any(p.requires_grad for p in parts),
    )

    def backward(g):
        offset = 0
        for p in parts:
            rows = p.shape[0]
            if p.requires_grad:
                p.accumulate_grad(g[offset : offset + rows])
            offset += rows

    _record(out, backward)
    return out


def vectorize(x: Tensor) -> Tensor:
    """Flatten to a vector in row-major order."""
    return reshape(x, (x.size,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape preserving the element count."""
    out = _result(x.data.reshape(shape).copy(), x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    _record(out, backward)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = _result(np.asarray(x.data.sum()), x)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)))

    _record(out, backward)
    return out


def cross_entropy(probs: Tensor, label: int) -> Tensor:
    """Negative log-probability of ``label`` under a probability vector."""
    if probs.ndim != 1:
        raise ShapeError(f"cross_entropy: expected a probability vector, got shape {probs.shape}")
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"cross_entropy: label {label} outside [0, {probs.shape[0]})")
    p = float(probs.data[label])
    out = _result(np.asarray(-math.log(p) if p > 0 else math.inf), probs)

    def backward(g):
        if probs.requires_grad:
            gp = np.zeros_like(probs.data)
            gp[label] = -float(g) / p
            probs.accumulate_grad(gp)

    _record(out, backward)
    return out


def mean_scalars(parts: list[Tensor]) -> Tensor:
    """Arithmetic mean of scalar tensors (used for batch losses)."""
    total = parts[0]
    for p in parts[1:]:
        total = add(total, p)
    return scale(total, 1.0 / len(parts))


def xavier_init(shape: tuple[int, ...], seed) -> Tensor:
    """Uniform init on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).

    Fans follow the usual conventions: a matrix (m, n) has fans (m, n); a
    kernel stack (c_out, c_in, l) has fans (c_in*l, c_out*l); a vector uses
    its own extent for both.  ``seed`` may be an int or a Generator.
    """
    if len(shape) == 0:
        raise ShapeError("xavier_init: shape needs at least one extent")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    elif len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 3:
        c_out, c_in, klen = shape
        fan_in, fan_out = c_in * klen, c_out * klen
    else:
        raise ShapeError(f"xavier_init: unsupported rank {len(shape)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape))
