"""Composite Newton-Cotes rules on a uniform grid."""

from __future__ import annotations

import numpy as np


def newton_cotes_weights(n_intervals: int, h: float, order: int = 2) -> np.ndarray:
    """Weights for ``integral ~ sum_k w_k f(k h)`` over ``k = 0..n_intervals``.

    ``order=2`` is the trapezoid rule. ``order=4`` is composite Simpson; an odd
    number of intervals closes with a Simpson 3/8 panel, and one interval falls
    back to the trapezoid rule.
    """
    if n_intervals < 0:
        raise ValueError(f"number of intervals must be nonnegative, got {n_intervals}")
    if order not in (2, 4):
        raise ValueError(f"quadrature order must be 2 or 4, got {order}")
    w = np.zeros(n_intervals + 1)
    if n_intervals == 0:
        return w
    if order == 2 or n_intervals == 1:
        w[:] = h
        w[0] = w[-1] = h / 2
        return w
    simpson_end = n_intervals if n_intervals % 2 == 0 else n_intervals - 3
    for a in range(0, simpson_end, 2):
        w[a:a + 3] += h / 3 * np.array([1.0, 4.0, 1.0])
    if simpson_end != n_intervals:
        w[simpson_end:] += 3 * h / 8 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def integrate(samples: np.ndarray, h: float, order: int = 2, axis: int = 0) -> np.ndarray:
    samples = np.asarray(samples)
    w = newton_cotes_weights(samples.shape[axis] - 1, h, order)
    return np.tensordot(w, samples, axes=([0], [axis]))
