"""2-D FFT helpers, radial Butterworth gains and latent frequency splits.

Spectra use the standard unshifted DFT layout (DC at index ``(0, 0)``). The
radial coordinate ``r`` is normalized so that ``r = 1`` at the 2-D Nyquist
corner; ``r_c = 0.8`` therefore keeps the top 20 % of radial frequencies.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .tensor_io import DTYPE, as_tensor

EPS = 1e-12


@dataclass(frozen=True)
class FreqFilterSpec:
    cutoff: float
    order: int = 2
    pass_: str = "low"

    def __post_init__(self):
        if not 0.0 < self.cutoff <= 1.0:
            raise ParameterError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if int(self.order) != self.order or self.order < 1:
            raise ParameterError(f"order must be a positive integer, got {self.order}")
        if self.pass_ not in ("low", "high"):
            raise ParameterError(f"pass must be 'low' or 'high', got {self.pass_!r}")


def fft2(plane):
    """Unnormalized forward 2-D DFT over the last two axes (complex128)."""
    return np.fft.fft2(np.asarray(plane, dtype=np.float64), axes=(-2, -1))


def ifft2(spectrum):
    """Inverse 2-D DFT (divides by H*W); returns the real part as float32."""
    return np.fft.ifft2(spectrum, axes=(-2, -1)).real.astype(DTYPE)


def radial_frequency_grid(h, w):
    fu = np.fft.fftfreq(h)[:, None]
    fv = np.fft.fftfreq(w)[None, :]
    return np.sqrt((fu / 0.5) ** 2 + (fv / 0.5) ** 2) / np.sqrt(2.0)


def _lowpass(r, cutoff, order):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + (r / cutoff) ** (2 * int(order)))


def butterworth_gain(spec, h, w):
    """Real gain mask ``1 / (1 + (r / r_c)^(2n))`` or its complement."""
    if spec.cutoff <= 0:
        raise ParameterError(f"cutoff must be > 0, got {spec.cutoff}")
    g = _lowpass(radial_frequency_grid(h, w), spec.cutoff, spec.order)
    return g if spec.pass_ == "low" else 1.0 - g


def _gains(h, w, cutoff, order):
    low = butterworth_gain(FreqFilterSpec(cutoff, order, "low"), h, w)
    return low, 1.0 - low


def decompose(z, cutoff, order=2):
    """Split ``z`` (C x H x W or H x W) into Butterworth low and high parts.

    The high-pass gain is the exact complement of the low-pass gain, so the
    two parts sum back to ``z``.
    """
    z = as_tensor(z, ranks=(2, 3))
    spec = fft2(z)
    low, high = _gains(z.shape[-2], z.shape[-1], cutoff, order)
    return ifft2(spec * low), ifft2(spec * high)


def highpass(z, cutoff, order=2):
    z = as_tensor(z, ranks=(2, 3))
    _, high = _gains(z.shape[-2], z.shape[-1], cutoff, order)
    return ifft2(fft2(z) * high)


def lowpass(z, cutoff, order=2):
    z = as_tensor(z, ranks=(2, 3))
    low, _ = _gains(z.shape[-2], z.shape[-1], cutoff, order)
    return ifft2(fft2(z) * low)


def hf_energy_ratio(z, cutoff, order=2):
    """Per-channel fraction of spectral energy passed by the Butterworth high-pass."""
    z = as_tensor(z, ranks=(2, 3))
    if z.ndim == 2:
        z = z[None]
    power = np.abs(fft2(z)) ** 2
    _, high = _gains(z.shape[-2], z.shape[-1], cutoff, order)
    ratios = []
    for c in range(z.shape[0]):
        ratios.append(float((power[c] * high).sum() / (power[c].sum() + EPS)))
    return ratios


def ideal_highpass_mask(h, w, cutoff):
    return radial_frequency_grid(h, w) > cutoff


def sharp_highpass(plane, cutoff=0.8):
    """Ideal high-pass: keep only coefficients with ``r > cutoff``."""
    plane = as_tensor(plane, ranks=(2, 3))
    mask = ideal_highpass_mask(plane.shape[-2], plane.shape[-1], cutoff)
    return ifft2(fft2(plane) * mask)
