"""Detail-aware loss weighting.

A per-pixel difficulty weight is formed from a detail map of the target and
an error map between prediction and target, squashed with a ``tanh`` cap and
normalized to mean one. The weight then scales an L2 loss and any externally
computed per-position loss map (perceptual or regularizer).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .spatial_filters import (
    box_blur,
    detail_map,
    laplacian_magnitude,
    local_variance,
    quantile_norm,
    sobel_magnitude,
)
from .tensor_io import DTYPE, as_tensor, to_gray

LAMBDA_MSE = 1.0
LAMBDA_LPIPS = 2.0


@dataclass(frozen=True)
class DawConfig:
    p: float = 0.3
    alpha: float = 1.0
    w_max: float = 2.0
    blur_radius: int = 3

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.w_max <= 0:
            raise ParameterError(f"w_max must be > 0, got {self.w_max}")
        if self.blur_radius < 1 or self.blur_radius % 2 == 0:
            raise ParameterError(f"blur_radius must be a positive odd window, got {self.blur_radius}")


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _as_image(x):
    x = as_tensor(x, ranks=(2, 3))
    return x[None] if x.ndim == 2 else x


def pixel_error(x_sr, x_h):
    """Channel-mean absolute difference, one value per pixel."""
    a, b = _as_image(x_sr), _as_image(x_h)
    _same_shape(a, b, "pixel_error")
    return np.abs(a.astype(np.float64) - b).mean(axis=0).astype(DTYPE)


def gaussian_blur(plane, sigma):
    """Separable Gaussian blur, radius ``ceil(3 sigma)``, edges replicated."""
    plane = np.asarray(plane, dtype=np.float64)
    if sigma <= 0:
        return plane.copy()
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    out = plane
    for axis in (-2, -1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            acc += w * np.take(padded, np.arange(i, i + n), axis=axis)
        out = acc
    return out


PROXY_SIGMAS = (1.0, 2.0, 4.0)


def perceptual_proxy(x_sr, x_h):
    """Fallback perceptual error map used when no external map is supplied.

    Mean over three Gaussian scales of the channel-mean L1 difference between
    the blurred prediction and the blurred target.
    """
    a, b = _as_image(x_sr), _as_image(x_h)
    _same_shape(a, b, "perceptual_proxy")
    acc = np.zeros(a.shape[1:], dtype=np.float64)
    for s in PROXY_SIGMAS:
        acc += np.abs(gaussian_blur(a, s) - gaussian_blur(b, s)).mean(axis=0)
    return (acc / len(PROXY_SIGMAS)).astype(DTYPE)


def mix_error(e_pix, e_perc, p):
    """Quantile-normalized convex mix ``(1 - p) e_pix + p e_perc``."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    e_pix = as_tensor(e_pix, ranks=(2,))
    e_perc = as_tensor(e_perc, ranks=(2,))
    _same_shape(e_pix, e_perc, "mix_error")
    if np.any(e_perc < 0):
        raise ParameterError("perceptual error map must be nonnegative")
    if p == 0:
        mixed = e_pix
    elif p == 1:
        mixed = e_perc
    else:
        mixed = (1.0 - p) * e_pix.astype(np.float64) + p * e_perc.astype(np.float64)
    return quantile_norm(mixed)


def capped_difficulty(d, e, cfg):
    """``tanh(blur(D * E) / w_max) * w_max``, values in ``[0, w_max)``."""
    d = as_tensor(d, ranks=(2,))
    e = as_tensor(e, ranks=(2,))
    _same_shape(d, e, "difficulty_weights")
    de = d.astype(np.float64) * e
    blurred = box_blur(de, cfg.blur_radius).astype(np.float64)
    return np.tanh(blurred / cfg.w_max) * cfg.w_max


def difficulty_weights(d, e, cfg=DawConfig()):
    """Mean-one difficulty weight map ``w*`` from detail ``d`` and error ``e``."""
    w = capped_difficulty(d, e, cfg)
    raw = 1.0 + cfg.alpha * w
    return (raw / raw.mean()).astype(DTYPE)


def weighted_mse(x_sr, x_h, w):
    """Mean of ``w * (x_sr - x_h)^2``; ``w`` (H x W) broadcasts over channels."""
    a, b = _as_image(x_sr), _as_image(x_h)
    _same_shape(a, b, "weighted_mse")
    w = as_tensor(w, ranks=(2,))
    if w.shape != a.shape[1:]:
        raise ShapeError(f"weight map {w.shape} does not match image {a.shape[1:]}")
    diff = a.astype(np.float64) - b
    return float(np.mean(w.astype(np.float64)[None] * diff * diff))


def _bilinear_matrix(n_out, n_in):
    # half-pixel-centre sampling, edge clamped
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        m[i, lo] += 1.0 - t
        m[i, hi] += t
    return m


def resize_bilinear(plane, shape):
    """Bilinear resize of a plane to ``shape`` (half-pixel centres)."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = shape
    if h < 1 or w < 1:
        raise ShapeError(f"target shape must be positive, got {shape}")
    return _bilinear_matrix(h, plane.shape[0]) @ plane @ _bilinear_matrix(w, plane.shape[1]).T


def resize_weights(w, shape):
    """Resize a weight map and renormalize it to mean one."""
    r = resize_bilinear(w, shape)
    return r / r.mean()


def weighted_external_loss(loss_map, w):
    """Mean of an external per-position loss map weighted by the resized ``w``."""
    loss_map = np.asarray(loss_map, dtype=np.float64)
    if loss_map.ndim != 2 or loss_map.size == 0:
        raise ShapeError(f"loss map must be a non-empty plane, got shape {loss_map.shape}")
    w = as_tensor(w, ranks=(2,))
    ww = resize_weights(w, loss_map.shape)
    return float(np.mean(ww * loss_map))


def total_loss(l_mse, l_perc, l_reg=0.0, lambda_mse=LAMBDA_MSE, lambda_lpips=LAMBDA_LPIPS, lambda_reg=0.0):
    total = lambda_mse * l_mse + lambda_lpips * l_perc
    if lambda_reg != 0:
        total += lambda_reg * l_reg
    return total


def daw_trace(x_sr, x_h, cfg=DawConfig(), e_perc=None):
    """Run the whole weighting pipeline and return every intermediate stage.

    ``x_sr`` and ``x_h`` are C x H x W images in [0, 1]. When ``e_perc`` is
    omitted the blur-pyramid proxy stands in for a learned perceptual map.

    Returns a dict with keys ``gray``, ``sobel``, ``laplacian``, ``variance``,
    ``detail``, ``e_pix``, ``e_perc``, ``error``, ``capped``, ``weights``,
    ``l2`` and ``perc_loss`` (the weighted external loss over ``e_perc``).
    """
    a, b = _as_image(x_sr), _as_image(x_h)
    _same_shape(a, b, "daw_trace")
    gray = to_gray(b)
    stages = {
        "gray": gray,
        "sobel": sobel_magnitude(gray),
        "laplacian": laplacian_magnitude(gray),
        "variance": local_variance(gray),
        "detail": detail_map(gray),
        "e_pix": pixel_error(a, b),
    }
    perc = perceptual_proxy(a, b) if e_perc is None else as_tensor(e_perc, ranks=(2,))
    stages["e_perc"] = perc
    if perc.shape != stages["e_pix"].shape:
        # external perceptual maps may live on a coarser grid
        perc_full = resize_bilinear(perc, stages["e_pix"].shape).astype(DTYPE)
    else:
        perc_full = perc
    stages["error"] = mix_error(stages["e_pix"], perc_full, cfg.p)
    stages["capped"] = capped_difficulty(stages["detail"], stages["error"], cfg).astype(DTYPE)
    stages["weights"] = difficulty_weights(stages["detail"], stages["error"], cfg)
    stages["l2"] = weighted_mse(a, b, stages["weights"])
    stages["perc_loss"] = weighted_external_loss(stages["e_perc"], stages["weights"])
    return stages
