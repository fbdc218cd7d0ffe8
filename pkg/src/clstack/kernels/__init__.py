"""Backend selection for the hot kernels.

Prefers the compiled Cython extension when it has been built; falls back to
the numpy reference implementation otherwise.  Set ``CLSTACK_PURE_PYTHON=1``
to force the fallback (used by the benchmark and the parity tests).
"""

import os

from . import reference

if os.environ.get("CLSTACK_PURE_PYTHON"):
    _impl = reference
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = reference

BACKEND = _impl.BACKEND
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
pool_bins = reference.pool_bins

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward",
    "maxpool_forward",
    "maxpool_backward",
    "pool_bins",
]
