"""Dense float64 tensors with taped reverse-mode differentiation.

A ``Tensor`` wraps a numpy array plus a ``requires_grad`` flag and a lazily
allocated ``grad`` buffer.  Differentiable operations (see :mod:`clstack.ops`)
record a backward closure on the currently active ``Tape``; replaying the tape
in reverse execution order accumulates gradients into every participating
tensor.  Tapes are thread-local, so independent training contexts (one per
cross-validation fold) never share state.

Non-finite values are treated as an error state: every operation result and
every accumulated gradient is checked, and a ``NonFiniteError`` is raised as
soon as a NaN or Inf appears.
"""

from __future__ import annotations

import math
import threading

import numpy as np


class ShapeError(ValueError):
    """Operand extents are incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in an operation result or gradient."""


_STATE = threading.local()


def active_tape():
    """Return the innermost active Tape of this thread, or None."""
    stack = getattr(_STATE, "tapes", None)
    return stack[-1] if stack else None


def _check_finite(arr: np.ndarray, what: str) -> None:
    # a single sum is cheaper than isfinite().all(); NaN/Inf anywhere poisons it
    if not math.isfinite(float(arr.sum())):
        raise NonFiniteError(f"non-finite values in {what}")


class Tensor:
    """A dense row-major float64 array participating in autodiff."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        """Add ``g`` into this tensor's gradient buffer."""
        _check_finite(g, "gradient")
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed operations, replayed backward for gradients."""

    def __init__(self):
        self._records: list = []

    def __enter__(self) -> "Tape":
        stack = getattr(_STATE, "tapes", None)
        if stack is None:
            stack = _STATE.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _STATE.tapes.pop()

    def record(self, out: Tensor, backward) -> None:
        """Register ``backward(grad_out)`` to run when the tape is replayed."""

        def runner():
            g = out.grad
            if g is not None:
                backward(g)

        self._records.append(runner)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Seed ``loss`` with gradient 1 and replay all records in reverse."""
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for runner in reversed(self._records):
            runner()
