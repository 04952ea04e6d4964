"""Spatial detail operators used to build the detail map.

All operators take a rank-2 float plane, replicate edges, and return a plane
of the same size. Arithmetic runs in float64 and is cast back to float32.
"""

import numpy as np

from .errors import ParameterError
from .tensor_io import DTYPE, as_tensor

DEFAULT_Q_LO = 0.02
DEFAULT_Q_HI = 0.98

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T
LAPLACE_4 = np.array([[0, -1, 0], [-1, 4, -1], [0, -1, 0]], dtype=np.float64)


def _plane(y):
    return as_tensor(y, ranks=(2,)).astype(np.float64)


def correlate_replicate(y, kernel):
    """Same-size cross-correlation of a plane with an odd kernel, edges replicated."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(y, ((ph, ph), (pw, pw)), mode="edge")
    h, w = y.shape
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            if kernel[i, j] != 0:
                out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def _box_mean(y, window):
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd integer, got {window}")
    p = window // 2
    padded = np.pad(y, p, mode="edge")
    # summed-area table keeps large windows cheap
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float64)
    sat[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = y.shape
    s = (
        sat[window : window + h, window : window + w]
        - sat[:h, window : window + w]
        - sat[window : window + h, :w]
        + sat[:h, :w]
    )
    return s / (window * window)


def sobel_magnitude(y):
    """Gradient magnitude ``sqrt(Gx^2 + Gy^2)`` from the 3x3 Sobel pair."""
    y = _plane(y)
    gx = correlate_replicate(y, SOBEL_X)
    gy = correlate_replicate(y, SOBEL_Y)
    return np.hypot(gx, gy).astype(DTYPE)


def laplacian_magnitude(y):
    """Absolute response of the 4-neighbour Laplacian."""
    return np.abs(correlate_replicate(_plane(y), LAPLACE_4)).astype(DTYPE)


def local_variance(y, window=3):
    """Population variance over a ``window`` x ``window`` replicated neighbourhood."""
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd integer, got {window}")
    p = window // 2
    y = _plane(y)
    padded = np.pad(y, p, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
    return win.var(axis=(-2, -1)).astype(DTYPE)


def box_blur(y, window=3):
    """Uniform ``window`` x ``window`` mean with edge replication."""
    return _box_mean(_plane(y), int(window)).astype(DTYPE)


def box_blur3(y):
    return box_blur(y, 3)


def quantile_norm(y, q_lo=DEFAULT_Q_LO, q_hi=DEFAULT_Q_HI):
    """Clamp-rescale ``y`` between its empirical ``q_lo`` and ``q_hi`` quantiles.

    Quantiles interpolate linearly between order statistics. A degenerate
    range (both quantiles equal) yields an all-zero map.
    """
    if not (0.0 <= q_lo < q_hi <= 1.0):
        raise ParameterError(f"need 0 <= q_lo < q_hi <= 1, got {q_lo}, {q_hi}")
    v = np.asarray(y, dtype=np.float64)
    a, b = np.quantile(v, [q_lo, q_hi], method="linear")
    if b == a:
        return np.zeros(v.shape, dtype=DTYPE)
    return np.clip((v - a) / (b - a), 0.0, 1.0).astype(DTYPE)


def detail_response(y_gray):
    """Mean of Sobel, Laplacian and local-variance responses (before normalization)."""
    s = sobel_magnitude(y_gray).astype(np.float64)
    lap = laplacian_magnitude(y_gray).astype(np.float64)
    v = local_variance(y_gray, 3).astype(np.float64)
    return ((s + lap + v) / 3.0).astype(DTYPE)


def detail_map(y_gray, q_lo=DEFAULT_Q_LO, q_hi=DEFAULT_Q_HI):
    """Detail map in [0, 1]: blurred, quantile-normalized mean detail response."""
    return box_blur3(quantile_norm(detail_response(y_gray), q_lo, q_hi))
