"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import Tensor, no_grad


def finite_diff_check(f, point, h: float = 1e-6, max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``f`` maps the tensor(s) in ``point`` to a scalar tensor.  The error per
    coordinate is ``|analytic - numeric| / max(1, |analytic|)``.  With
    ``max_coords`` only a seeded random subset of coordinates is probed
    per input, which keeps end-to-end checks on large graphs affordable.
    """
    inputs = [point] if isinstance(point, Tensor) else list(point)
    for t in inputs:
        if t.dtype != np.float64:
            t.data = t.data.astype(np.float64)
        t.requires_grad = True
        t.grad = None

    out = f(*inputs)
    if not np.isfinite(out.data).all():
        raise NumericError("finite_diff_check: f is not finite at the base point")
    if out.requires_grad:
        out.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for t in inputs:
            analytic = np.zeros_like(t.data) if t.grad is None else t.grad
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f(*inputs).data)
                flat[i] = orig - h
                fm = float(f(*inputs).data)
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericError(f"finite_diff_check: f not finite at probe {i}")
                numeric = (fp - fm) / (2.0 * h)
                a = float(analytic.reshape(-1)[i])
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
