"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import Tape, Tensor

DENOM_FLOOR = 1e-8  # avoids 0/0 where both gradients vanish


def grad_check(
    f: Callable[[], Tensor],
    point: Mapping[str, Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` must be a deterministic function of the tensors in ``point`` (it is
    re-evaluated at perturbed coordinates).  When ``max_coords`` is given, at
    most that many coordinates per tensor are probed, chosen by ``rng``.
    Returns the maximum relative error, with the denominator floored at
    ``DENOM_FLOOR``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"grad_check: step size {h!r} outside [1e-7, 1e-3]")

    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in point.items()
    }
    for t in point.values():
        t.zero_grad()

    worst = 0.0
    for name, tensor in point.items():
        flat = tensor.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        ana_flat = analytic[name].reshape(-1)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + h
            f_plus = f().item()
            flat[idx] = original - h
            f_minus = f().item()
            flat[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(ana_flat[idx] - numeric) / max(abs(ana_flat[idx]), abs(numeric), DENOM_FLOOR)
            worst = max(worst, err)
    return worst
