"""Compiled kernels against the numpy reference: same contracts, same numbers."""

import importlib.util

import numpy as np
import pytest

from clstack.kernels import reference

_spec = importlib.util.find_spec("clstack.kernels._fast")
fast = pytest.importorskip("clstack.kernels._fast") if _spec else pytest.skip(
    "compiled kernel extension not built", allow_module_level=True
)


@pytest.mark.parametrize("trial", range(10))
def test_conv_forward_backward_parity(trial):
    rng = np.random.default_rng(trial)
    c_in = int(rng.integers(1, 6))
    c_out = int(rng.integers(1, 6))
    length = int(rng.integers(8, 40))
    klen = int(rng.integers(1, 6))
    stride = int(rng.integers(1, 4))
    x = rng.normal(size=(c_in, length))
    k = rng.normal(size=(c_out, c_in, klen))
    b = rng.normal(size=c_out)

    out_ref = reference.conv1d_forward(x, k, b, stride)
    out_fast = fast.conv1d_forward(x, k, b, stride)
    np.testing.assert_allclose(out_fast, out_ref, rtol=1e-12, atol=1e-12)

    g = rng.normal(size=out_ref.shape)
    for a, r in zip(fast.conv1d_backward(x, k, stride, g), reference.conv1d_backward(x, k, stride, g)):
        np.testing.assert_allclose(a, r, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("trial", range(10))
def test_pool_forward_backward_parity(trial):
    rng = np.random.default_rng(100 + trial)
    c = int(rng.integers(1, 6))
    length = int(rng.integers(4, 50))
    target = int(rng.integers(1, length + 1))
    x = rng.normal(size=(c, length))

    out_ref, arg_ref = reference.maxpool_forward(x, target)
    out_fast, arg_fast = fast.maxpool_forward(x, target)
    np.testing.assert_array_equal(out_fast, out_ref)
    np.testing.assert_array_equal(arg_fast, arg_ref)

    g = rng.normal(size=out_ref.shape)
    np.testing.assert_array_equal(
        fast.maxpool_backward(arg_fast, g, length),
        reference.maxpool_backward(arg_ref, g, length),
    )


def test_paper_shape_parity():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(12, 768))
    k = rng.normal(size=(4, 12, 5))
    b = rng.normal(size=4)
    out_ref = reference.conv1d_forward(x, k, b, 2)
    out_fast = fast.conv1d_forward(x, k, b, 2)
    assert out_ref.shape == out_fast.shape == (4, 382)
    np.testing.assert_allclose(out_fast, out_ref, rtol=1e-12, atol=1e-12)

    pooled_ref, _ = reference.maxpool_forward(out_ref, 380)
    pooled_fast, _ = fast.maxpool_forward(out_fast, 380)
    np.testing.assert_allclose(pooled_fast, pooled_ref, rtol=1e-12, atol=1e-12)
