"""Classification heads over frozen per-layer [CLS] stacks.

Subpackages/modules:

* ``autodiff`` / ``ops`` / ``gradcheck``: a minimal float64 tensor engine
  with taped reverse-mode differentiation and a finite-difference oracle.
* ``kernels``: the hot convolution/pooling kernels (compiled extension with
  a numpy fallback, selected at import).
* ``store``: the CLSB binary dataset format plus a synthetic generator.
* ``models``: the five classification heads and their parameter catalogs.
* ``training``: Adam with warmup/inverse-sqrt schedule and the fold loop.
* ``evaluation``: seeded k-fold cross-validation and ASO model comparison.
* ``cli``: the ``clstack`` command-line entry point.
"""

from .autodiff import NonFiniteError, ShapeError, Tape, Tensor
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "ShapeError", "NonFiniteError", "KERNEL_BACKEND", "__version__"]
