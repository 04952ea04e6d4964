"""Training-free frequency injection into a restored latent.

The low-frequency branch adds a gated Butterworth low-pass component of the
latent back onto itself; the high-frequency branch does the same with the
complementary high-pass (optionally differenced against a reference latent).
Gates are products of a spatial map derived from the LQ detail map and a
per-channel map derived from each channel's high-frequency energy ratio.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .freq import decompose, hf_energy_ratio, highpass
from .spatial_filters import detail_map
from .tensor_io import DTYPE, as_tensor, to_gray


@dataclass(frozen=True)
class LfimConfig:
    lf_alpha: float = 0.2
    hf_beta: float = 0.2
    lf_cutoff: float = 0.25
    hf_cutoff: float = 0.5
    order: int = 2
    gamma: float = 1.0
    erosion_radius: int = 0
    hf_use_diff: bool = False
    channel_temperature: float = 0.1

    def __post_init__(self):
        if self.lf_alpha < 0 or self.hf_beta < 0:
            raise ParameterError("lf_alpha and hf_beta must be >= 0")
        for name in ("lf_cutoff", "hf_cutoff"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {v}")
        if int(self.order) != self.order or self.order < 1:
            raise ParameterError(f"order must be a positive integer, got {self.order}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.erosion_radius) != self.erosion_radius or self.erosion_radius < 0:
            raise ParameterError(f"erosion_radius must be a nonnegative integer, got {self.erosion_radius}")
        if self.channel_temperature <= 0:
            raise ParameterError(f"channel_temperature must be > 0, got {self.channel_temperature}")


@dataclass(frozen=True)
class GateMaps:
    m_sp: np.ndarray
    m_ch: np.ndarray


def erode(plane, radius):
    """Grey-scale erosion (neighbourhood minimum) with a square element, edges replicated."""
    plane = np.asarray(plane)
    if radius == 0:
        return plane.copy()
    size = 2 * radius + 1
    padded = np.pad(plane, radius, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (size, size))
    return win.min(axis=(-2, -1))


def spatial_gate_lf(detail, erosion_radius=0):
    """``1 - detail``, optionally eroded; suppresses LF injection on edges."""
    detail = as_tensor(detail, ranks=(2,))
    gate = 1.0 - detail.astype(np.float64)
    return np.clip(erode(gate, int(erosion_radius)), 0.0, 1.0).astype(DTYPE)


def spatial_gate_hf(detail, gamma=1.0):
    """``detail ** gamma`` with ``0 ** 0 == 1``; favours HF injection on edges."""
    detail = as_tensor(detail, ranks=(2,)).astype(np.float64)
    if gamma == 0:
        return np.ones(detail.shape, dtype=DTYPE)
    return np.clip(np.power(np.clip(detail, 0.0, 1.0), gamma), 0.0, 1.0).astype(DTYPE)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def channel_gate(z, cfg, branch):
    """Per-channel gate in [0, 1] from HF energy ratios centred on their median.

    The ``hf`` gate is ``sigmoid((rho_c - median(rho)) / temperature)``; the
    ``lf`` gate is its complement.
    """
    z = as_tensor(z, ranks=(3,))
    if branch not in ("lf", "hf"):
        raise ParameterError(f"branch must be 'lf' or 'hf', got {branch!r}")
    rho = np.asarray(hf_energy_ratio(z, cfg.hf_cutoff, cfg.order))
    hf = _sigmoid((rho - np.median(rho)) / cfg.channel_temperature)
    return (hf if branch == "hf" else 1.0 - hf).astype(DTYPE)


def _check_detail(z, detail):
    detail = as_tensor(detail, ranks=(2,))
    if detail.shape != z.shape[1:]:
        raise ShapeError(f"detail map {detail.shape} does not match latent grid {z.shape[1:]}")
    return detail


def _inject(z, intensity, m_sp, m_ch, delta):
    gate = m_sp.astype(np.float64)[None] * m_ch.astype(np.float64)[:, None, None]
    return (z.astype(np.float64) + intensity * gate * delta).astype(DTYPE)


def lf_gates(z, detail, cfg):
    return GateMaps(spatial_gate_lf(detail, cfg.erosion_radius), channel_gate(z, cfg, "lf"))


def hf_gates(z, detail, cfg):
    return GateMaps(spatial_gate_hf(detail, cfg.gamma), channel_gate(z, cfg, "hf"))


def inject_lf(z, detail, cfg, gates=None):
    """``z + lf_alpha * M_sp * M_ch * LP(z)``.

    ``gates`` overrides the gates computed from ``z`` and ``detail``.
    """
    z = as_tensor(z, ranks=(3,))
    detail = _check_detail(z, detail)
    if cfg.lf_alpha == 0:
        return z.copy()
    if gates is None:
        gates = lf_gates(z, detail, cfg)
    delta_lp, _ = decompose(z, cfg.lf_cutoff, cfg.order)
    return _inject(z, cfg.lf_alpha, gates.m_sp, gates.m_ch, delta_lp.astype(np.float64))


def hf_delta(z, cfg, z_ref=None):
    if cfg.hf_use_diff:
        if z_ref is None:
            raise ParameterError("hf_use_diff is set but no reference latent was given")
        z_ref = as_tensor(z_ref, ranks=(3,))
        if z_ref.shape != z.shape:
            raise ShapeError(f"reference latent {z_ref.shape} does not match {z.shape}")
        return highpass(z, cfg.hf_cutoff, cfg.order).astype(np.float64) - highpass(
            z_ref, cfg.hf_cutoff, cfg.order
        )
    return highpass(z, cfg.hf_cutoff, cfg.order).astype(np.float64)


def inject_hf(z, detail, cfg, z_ref=None, gates=None):
    """``z + hf_beta * M_sp^HF * M_ch^HF * dHP`` with ``dHP = HPF(z) [- HPF(z_ref)]``."""
    z = as_tensor(z, ranks=(3,))
    detail = _check_detail(z, detail)
    if cfg.hf_use_diff and z_ref is None:
        raise ParameterError("hf_use_diff is set but no reference latent was given")
    if cfg.hf_beta == 0:
        return z.copy()
    if gates is None:
        gates = hf_gates(z, detail, cfg)
    return _inject(z, cfg.hf_beta, gates.m_sp, gates.m_ch, hf_delta(z, cfg, z_ref))


def _area_matrix(n_out, n_in):
    # overlap of output cell [i, i+1) * n_in / n_out with input cell [j, j+1)
    edges = np.arange(n_out + 1) * (n_in / n_out)
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            m[i, j] = min(hi, j + 1) - max(lo, j)
    return m / m.sum(axis=1, keepdims=True)


def area_resize(plane, shape):
    """Area-average resample of a plane to ``shape``."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = shape
    return _area_matrix(h, plane.shape[0]) @ plane @ _area_matrix(w, plane.shape[1]).T


def lfim_gates(z_r, detail, cfg):
    """LF and HF gates for a latent, both analysed on ``z_r`` itself."""
    return lf_gates(z_r, detail, cfg), hf_gates(z_r, detail, cfg)


def latent_detail(detail_lq, latent_shape):
    d = as_tensor(detail_lq, ranks=(2,))
    if d.shape != tuple(latent_shape):
        d = np.clip(area_resize(d, latent_shape), 0.0, 1.0).astype(DTYPE)
    return d


def lfim_apply(z_r, detail_lq, cfg=LfimConfig(), z_ref=None):
    """LF injection followed by HF injection; returns the enhanced latent.

    ``detail_lq`` is the detail map of the LQ image at image resolution and
    is area-averaged down to the latent grid. Channel and spatial gates are
    computed once from ``z_r`` and shared by both steps, so the output is
    affine in each of ``lf_alpha`` and ``hf_beta``.
    """
    z_r = as_tensor(z_r, ranks=(3,))
    if cfg.hf_use_diff and z_ref is None:
        raise ParameterError("hf_use_diff is set but no reference latent was given")
    if cfg.lf_alpha == 0 and cfg.hf_beta == 0:
        return z_r.copy()
    detail = latent_detail(detail_lq, z_r.shape[1:])
    g_lf, g_hf = lfim_gates(z_r, detail, cfg)
    z = inject_lf(z_r, detail, cfg, gates=g_lf)
    return inject_hf(z, detail, cfg, z_ref=z_ref, gates=g_hf)


def lq_detail(lq_image):
    """Detail map of an LQ image (C x H x W in [0, 1])."""
    return detail_map(to_gray(lq_image))
