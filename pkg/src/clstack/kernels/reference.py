"""Pure numpy implementations of the hot convolution/pooling kernels.

This is the fallback backend; :mod:`clstack.kernels._fast` provides the same
four functions compiled with Cython.  Inputs and outputs are C-contiguous
float64 arrays throughout.
"""

from __future__ import annotations

import numpy as np

BACKEND = "reference"


def _windows(x: np.ndarray, length: int, stride: int, n: int) -> np.ndarray:
    """View of shape (c_in, n, length) over the sliding windows of ``x``."""
    c_in = x.shape[0]
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(c_in, n, length),
        strides=(x.strides[0], stride * x.strides[1], x.strides[1]),
        writeable=False,
    )


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """out[o, i] = bias[o] + sum_{c,j} kernels[o,c,j] * x[c, i*stride + j]."""
    c_in, length = x.shape
    c_out, _, klen = kernels.shape
    n = (length - klen) // stride + 1
    win = _windows(x, klen, stride, n)
    # (c_in, n, klen) -> (c_in*klen, n) so the contraction is a single GEMM
    flat = np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(c_in * klen, n)
    out = kernels.reshape(c_out, c_in * klen) @ flat
    out += bias[:, None]
    return out


def conv1d_backward(
    x: np.ndarray, kernels: np.ndarray, stride: int, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d_forward w.r.t. input, kernels, and bias."""
    c_in, length = x.shape
    c_out, _, klen = kernels.shape
    n = grad_out.shape[1]

    win = _windows(x, klen, stride, n)
    flat = np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(c_in * klen, n)
    grad_k = (grad_out @ flat.T).reshape(c_out, c_in, klen)
    grad_b = grad_out.sum(axis=1)

    # scatter kernels.T @ grad_out back onto the overlapping input windows;
    # for a fixed kernel offset j the target columns are disjoint, so a
    # strided slice-add accumulates safely
    spread = (kernels.reshape(c_out, c_in * klen).T @ grad_out).reshape(c_in, klen, n)
    grad_x = np.zeros_like(x)
    for j in range(klen):
        grad_x[:, j : j + n * stride : stride] += spread[:, j, :]
    return grad_x, grad_k, grad_b


def pool_bins(length: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive bin boundaries: bin i covers [floor(i*L/T), ceil((i+1)*L/T))."""
    i = np.arange(target, dtype=np.int64)
    starts = (i * length) // target
    ends = -((-(i + 1) * length) // target)  # ceil division
    return starts, ends


def maxpool_forward(x: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive max pooling to ``target`` columns.

    Returns (pooled values, flat argmax indices); ties resolve to the first
    maximal index of the bin.
    """
    c, length = x.shape
    starts, ends = pool_bins(length, target)
    width = int((ends - starts).max())
    idx = starts[:, None] + np.arange(width)[None, :]  # (target, width)
    valid = idx < ends[:, None]
    gathered = x[:, np.minimum(idx, length - 1)]  # (c, target, width)
    gathered = np.where(valid[None, :, :], gathered, -np.inf)
    offset = gathered.argmax(axis=2)  # first max within each bin
    argmax = starts[None, :] + offset
    out = np.take_along_axis(x, argmax, axis=1)
    return out, argmax


def maxpool_backward(argmax: np.ndarray, grad_out: np.ndarray, length: int) -> np.ndarray:
    """Route each output gradient to its bin's argmax position."""
    c = grad_out.shape[0]
    grad_x = np.zeros((c, length), dtype=grad_out.dtype)
    rows = np.arange(c)[:, None]
    np.add.at(grad_x, (rows, argmax), grad_out)
    return grad_x
