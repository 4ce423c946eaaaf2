"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .layers import LayerParams

# relative errors are taken against max(|analytic|, |numeric|, FLOOR) so that
# coordinates whose true gradient is ~0 are judged on absolute error
FLOOR = 1e-6


class NondeterministicError(RuntimeError):
    pass


def relative_error(analytic: float, numeric: float, floor: float = FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    fn: Callable[[bool], float],
    params: Iterable[LayerParams],
    epsilon: float = 1e-6,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients against central differences; return the worst relative error.

    ``fn(backward)`` must evaluate the scalar loss from the current parameter
    values. When ``backward`` is true it must also accumulate the analytic
    gradient into the blocks' ``grads`` (they are zeroed beforehand).
    ``max_coords`` caps the number of coordinates probed per block.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = list(params)
    first, second = fn(False), fn(False)
    if first != second:
        raise NondeterministicError(f"repeated evaluations differ: {first!r} vs {second!r}")

    for p in params:
        p.zero_grads()
    fn(True)
    analytic = {(id(p), k): p.grads[k].copy() for p in params for k in p.params}

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p in params:
        for key, value in p.params.items():
            flat = value.reshape(-1)
            grad = analytic[(id(p), key)].reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + epsilon
                f_plus = fn(False)
                flat[i] = orig - epsilon
                f_minus = fn(False)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * epsilon)
                worst = max(worst, relative_error(grad[i], numeric))
    for p in params:
        p.zero_grads()
    return worst
