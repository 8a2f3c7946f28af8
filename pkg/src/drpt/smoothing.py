"""Savitzky-Golay smoothing with truncated windows at the edges."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ValidationError


@lru_cache(maxsize=256)
def _weights(left: int, right: int, order: int) -> np.ndarray:
    """Dot-product weights evaluating the LS polynomial fit at offset 0.

    The window covers offsets ``-left..right``; the fit has degree
    ``min(order, left + right)``.
    """
    offsets = np.arange(-left, right + 1, dtype=np.float64)
    deg = min(order, offsets.size - 1)
    vander = np.vander(offsets, deg + 1, increasing=True)
    # row 0 of pinv(V) maps samples to the constant coefficient = value at 0
    w = np.linalg.pinv(vander)[0]
    w.setflags(write=False)
    return w


def savgol_coefficients(window: int, order: int) -> np.ndarray:
    """Centred smoothing coefficients for an odd ``window``."""
    _check(window, order)
    h = window // 2
    return _weights(h, h, order).copy()


def _check(window: int, order: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ValidationError(f"smoothing window must be a positive odd integer, got {window}")
    if order < 0 or order >= window:
        raise ValidationError(f"smoothing order must satisfy 0 <= order < window, got {order}")


def savgol(values, window: int = 7, order: int = 2) -> np.ndarray:
    """Smooth ``values`` by a sliding least-squares polynomial fit.

    Each sample is replaced by the value at its own position of the
    degree-``order`` polynomial fitted to the window centred on it. Near the
    ends the window is truncated to the available samples. A signal shorter
    than the window is returned unchanged.
    """
    _check(window, order)
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n < window:
        return v.copy()
    h = window // 2
    out = np.empty(n)
    centre = _weights(h, h, order)
    if n > 2 * h:
        # interior: plain correlation with the centred weights
        windows = np.lib.stride_tricks.sliding_window_view(v, window)
        out[h : n - h] = windows @ centre
    for i in list(range(min(h, n))) + list(range(max(n - h, h), n)):
        left, right = min(h, i), min(h, n - 1 - i)
        out[i] = _weights(left, right, order) @ v[i - left : i + right + 1]
    return out


def smooth_delta(delta_sorted, window: int = 7, order: int = 2) -> np.ndarray:
    """Smooth an ascending Δx sequence and re-sort the result ascending."""
    d = np.asarray(delta_sorted, dtype=np.float64)
    if d.size > 1 and np.any(np.diff(d) < 0):
        raise ValidationError("smooth_delta expects its input sorted ascending")
    return np.sort(savgol(d, window, order), kind="stable")
