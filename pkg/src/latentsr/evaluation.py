"""Desk-scale experiment harness: degradation, metrics and trend sweeps.

There is no VAE here, so trend experiments treat the image itself, mapped
to [-1, 1], as the latent that the frequency injection operates on.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .daw import gaussian_blur, resize_bilinear
from .errors import ParameterError, ShapeError
from .freq import fft2, ideal_highpass_mask, sharp_highpass
from .lfim import LfimConfig, lfim_apply, lq_detail
from .tensor_io import DTYPE, as_tensor, to_gray

PSNR_IDENTICAL_DB = 1e9
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
HF_CUTOFF = 0.8
MIN_TREND_IMAGES = 10
BASELINE_CONTRAST = 0.8
BASELINE_NOISE = 0.05
SWEEP_VALUES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
CSV_COLUMNS = ("config_id", "lf_alpha", "hf_beta", "psnr_mean", "ssim_mean", "hf_energy_mean")


@dataclass(frozen=True)
class DegradationConfig:
    scale: int = 4
    blur_sigma: float = 1.5
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 1:
            raise ParameterError(f"scale must be an integer >= 1, got {self.scale}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ParameterError("blur_sigma and noise_sigma must be >= 0")


def degrade(x_h, cfg=DegradationConfig()):
    """Blur, area-downsample by ``cfg.scale``, add seeded Gaussian noise, clamp to [0, 1]."""
    x = as_tensor(x_h, ranks=(2, 3))
    h, w = x.shape[-2:]
    s = int(cfg.scale)
    if h % s or w % s:
        raise ShapeError(f"image {h}x{w} is not divisible by scale {s}")
    y = gaussian_blur(x, cfg.blur_sigma)
    y = y.reshape(*y.shape[:-2], h // s, s, w // s, s).mean(axis=(-3, -1))
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed)
        y = y + rng.normal(0.0, cfg.noise_sigma, size=y.shape)
    return np.clip(y, 0.0, 1.0).astype(DTYPE)


def _pair(a, b, what):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give ``1e9``."""
    a, b = _pair(a, b, "psnr")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_IDENTICAL_DB
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(a, b):
    """Mean single-scale SSIM of two planes (11x11 Gaussian window, sigma 1.5).

    Local statistics are computed with edge replication at the borders.
    """
    a, b = _pair(a, b, "ssim")
    if a.ndim != 2:
        raise ShapeError(f"ssim expects planes, got shape {a.shape}")
    mu_a = gaussian_blur(a, SSIM_SIGMA)
    mu_b = gaussian_blur(b, SSIM_SIGMA)
    var_a = gaussian_blur(a * a, SSIM_SIGMA) - mu_a**2
    var_b = gaussian_blur(b * b, SSIM_SIGMA) - mu_b**2
    cov = gaussian_blur(a * b, SSIM_SIGMA) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def hf_energy(x, cutoff=HF_CUTOFF):
    """Share of non-DC spectral energy lying above the ideal radial ``cutoff``."""
    x = as_tensor(x, ranks=(2,))
    power = np.abs(fft2(x)) ** 2
    power[0, 0] = 0.0
    total = power.sum()
    # relative floor absorbs FFT round-off on constant planes
    if total <= 1e-20 * max(1.0, float(np.sum(np.asarray(x, dtype=np.float64) ** 2)) * x.size):
        return 0.0
    mask = ideal_highpass_mask(*x.shape, cutoff)
    return float(power[mask].sum() / total)


def _channels(x):
    x = as_tensor(x, ranks=(2, 3))
    return x[None] if x.ndim == 2 else x


def hf_error_map(eps_base, eps_lrrb, eps_true, cutoff=HF_CUTOFF):
    """Signed spatial map of high-frequency error reduction, averaged over channels.

    Positive where the refined prediction has the smaller high-pass error.
    """
    base, lrrb, true = _channels(eps_base), _channels(eps_lrrb), _channels(eps_true)
    if not (base.shape == lrrb.shape == true.shape):
        raise ShapeError(f"shape mismatch {base.shape}, {lrrb.shape}, {true.shape}")
    e1 = np.abs(sharp_highpass(base.astype(np.float64) - true, cutoff).astype(np.float64))
    e2 = np.abs(sharp_highpass(lrrb.astype(np.float64) - true, cutoff).astype(np.float64))
    return (e1 - e2).mean(axis=0).astype(DTYPE)


def sign_log(x):
    """``sign(x) * ln(1 + |x|)`` element-wise."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.log1p(np.abs(x))).astype(DTYPE)


def diverging_rgb(values):
    """Map a signed plane to RGB: blue ramp below zero, white at zero, red above.

    Scaled by ``max|values|``; an all-zero plane renders uniformly white.
    """
    v = np.asarray(values, dtype=np.float64)
    m = np.max(np.abs(v)) if v.size else 0.0
    t = v / m if m > 0 else np.zeros_like(v)
    pos = np.clip(t, 0.0, 1.0)
    neg = np.clip(-t, 0.0, 1.0)
    r = 1.0 - neg
    g = 1.0 - pos - neg
    b = 1.0 - pos
    return np.stack([r, g, b]).astype(DTYPE)


# ---------------------------------------------------------------------------
# trend sweeps


def synthetic_images(n=20, size=64, seed=0):
    """Seeded RGB test images: smooth colour fields with rectangles, discs and fine texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = []
    for _ in range(n):
        img = np.empty((3, size, size))
        for c in range(3):
            field = rng.standard_normal((size, size))
            field = gaussian_blur(field, size / 8)
            field = 0.5 + 0.25 * field / (np.abs(field).max() + 1e-12)
            img[c] = field
        for _ in range(rng.integers(2, 5)):
            colour = rng.uniform(0.1, 0.9, size=3)
            if rng.random() < 0.5:
                x0, y0 = rng.uniform(0, 0.7, size=2)
                w, h = rng.uniform(0.15, 0.4, size=2)
                mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
            else:
                cx, cy = rng.uniform(0.2, 0.8, size=2)
                rad = rng.uniform(0.08, 0.25)
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 < rad**2
            img[:, mask] = colour[:, None]
        freq = rng.uniform(0.15, 0.35)
        angle = rng.uniform(0, np.pi)
        texture = np.sin(2 * np.pi * freq * size * (xx * np.cos(angle) + yy * np.sin(angle)))
        img += 0.06 * texture[None]
        out.append(np.clip(img, 0.0, 1.0).astype(DTYPE))
    return out


def to_latent(img):
    return (2.0 * np.asarray(img, dtype=np.float64) - 1.0).astype(DTYPE)


def from_latent(z):
    return np.clip((np.asarray(z, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0).astype(DTYPE)


def baseline_restoration(x_h, cfg=DegradationConfig(), contrast=BASELINE_CONTRAST, residual_noise=BASELINE_NOISE):
    """Pseudo-latent stand-in for a one-step restoration.

    The HQ image is degraded, upsampled back bilinearly and mapped to
    [-1, 1]. The restored latent is that latent shrunk by ``contrast``
    (structure pulled toward zero) plus seeded white noise of std
    ``residual_noise`` (error of the predicted residual).

    Returns ``(z_r, detail)`` where ``detail`` is the detail map of the
    upsampled LQ image at latent resolution.
    """
    x_h = _channels(x_h)
    x_l = degrade(x_h, cfg)
    up = np.stack([resize_bilinear(ch, x_h.shape[1:]) for ch in x_l])
    up = np.clip(up, 0.0, 1.0).astype(DTYPE)
    z = contrast * to_latent(up).astype(np.float64)
    if residual_noise > 0:
        # distinct stream from the degradation noise
        rng = np.random.default_rng([cfg.seed, 1])
        z = z + rng.normal(0.0, residual_noise, size=z.shape)
    return z.astype(DTYPE), lq_detail(up)


@dataclass(frozen=True)
class TrendRow:
    config_id: str
    lf_alpha: float
    hf_beta: float
    psnr_mean: float
    ssim_mean: float
    hf_energy_mean: float


def _score(outputs, targets):
    ps, ss, hf = [], [], []
    for out, tgt in zip(outputs, targets):
        ps.append(psnr(out, tgt))
        g_out, g_tgt = to_gray(out), to_gray(tgt)
        ss.append(ssim(g_out, g_tgt))
        hf.append(hf_energy(g_out))
    return float(np.mean(ps)), float(np.mean(ss)), float(np.mean(hf))


def sweep_configs(sweep, values=SWEEP_VALUES, base=LfimConfig()):
    if sweep not in ("lf", "hf"):
        raise ParameterError(f"sweep must be 'lf' or 'hf', got {sweep!r}")
    cfgs = []
    for v in values:
        if sweep == "lf":
            cfg = LfimConfig(**{**base.__dict__, "lf_alpha": v, "hf_beta": 0.0})
        else:
            cfg = LfimConfig(**{**base.__dict__, "lf_alpha": 0.0, "hf_beta": v})
        cfgs.append((f"{sweep.upper()}-{v:.1f}", cfg))
    return cfgs


def lfim_trend_report(hq_set, sweep="lf", values=SWEEP_VALUES, degradation=DegradationConfig(), base=LfimConfig()):
    """Sweep one injection intensity and score the outputs against the HQ images.

    Every HQ image is degraded with its own seed (``degradation.seed + index``),
    restored by the bilinear baseline, enhanced with each configuration and
    scored. Rows come back in sweep order.
    """
    hq = [_channels(x) for x in hq_set]
    if len(hq) < MIN_TREND_IMAGES:
        raise ParameterError(f"trend report needs at least {MIN_TREND_IMAGES} images, got {len(hq)}")
    prepared = []
    for i, x in enumerate(hq):
        cfg = DegradationConfig(degradation.scale, degradation.blur_sigma, degradation.noise_sigma, degradation.seed + i)
        prepared.append(baseline_restoration(x, cfg))
    rows = []
    for cid, cfg in sweep_configs(sweep, values, base):
        outs = [from_latent(lfim_apply(z, d, cfg)) for z, d in prepared]
        rows.append(TrendRow(cid, cfg.lf_alpha, cfg.hf_beta, *_score(outs, hq)))
    return rows


def report_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [row.config_id, f"{row.lf_alpha:.6f}", f"{row.hf_beta:.6f}", f"{row.psnr_mean:.6f}", f"{row.ssim_mean:.6f}", f"{row.hf_energy_mean:.6f}"]
        )
    return buf.getvalue()


def report_text(rows):
    cells = [list(CSV_COLUMNS)] + [
        [r.config_id, f"{r.lf_alpha:.6f}", f"{r.hf_beta:.6f}", f"{r.psnr_mean:.6f}", f"{r.ssim_mean:.6f}", f"{r.hf_energy_mean:.6f}"]
        for r in rows
    ]
    widths = [max(len(c[i]) for c in cells) for i in range(len(CSV_COLUMNS))]
    return "".join("  ".join(c[i].rjust(widths[i]) for i in range(len(c))) + "\n" for c in cells)


def monotone_with_slack(values, slack=0.02, allowed=1):
    """True if ``values`` never decrease, except at most ``allowed`` drops of <= ``slack``."""
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    return len(drops) <= allowed and all(d <= slack for d in drops)
