import numpy as np
import pytest
from conftest import checkerboard, naive_dft2, naive_idft2
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from latentsr.errors import ParameterError
from latentsr.freq import (
    FreqFilterSpec,
    butterworth_gain,
    decompose,
    fft2,
    hf_energy_ratio,
    ifft2,
    radial_frequency_grid,
    sharp_highpass,
)

latents = hnp.arrays(
    np.float32,
    st.tuples(st.integers(1, 3), st.integers(1, 12), st.integers(1, 12)),
    elements=st.floats(-1, 1, width=32),
)


def test_fft_impulse():
    x = np.zeros((4, 6), np.float32)
    x[0, 0] = 1
    assert np.allclose(fft2(x), 1.0)


def test_fft_constant():
    s = fft2(np.full((5, 7), 2.0, np.float32))
    assert s[0, 0] == pytest.approx(2.0 * 35)
    s[0, 0] = 0
    assert np.max(np.abs(s)) < 1e-5


def test_fft_cosine_row():
    h, w, k = 4, 16, 3
    x = np.tile(np.cos(2 * np.pi * k * np.arange(w) / w), (h, 1)).astype(np.float32)
    mag = np.abs(fft2(x))
    assert mag[0, k] == pytest.approx(h * w / 2, rel=1e-6)
    assert mag[0, w - k] == pytest.approx(h * w / 2, rel=1e-6)
    mag[0, k] = mag[0, w - k] = 0
    assert mag.max() < 1e-4


@pytest.mark.parametrize("shape", [(1, 1), (3, 5), (7, 9), (16, 16), (13, 8)])
def test_fft_matches_naive(rng, shape):
    x = rng.standard_normal(shape).astype(np.float32)
    ref = naive_dft2(x)
    assert np.max(np.abs(fft2(x) - ref)) <= 1e-9 * np.max(np.abs(ref)) + 1e-9
    assert np.allclose(ifft2(ref), naive_idft2(ref).real, atol=1e-5)


def test_round_trip_large(rng):
    x = rng.standard_normal((128, 128)).astype(np.float32)
    back = np.fft.ifft2(fft2(x))
    assert np.max(np.abs(back.real - x)) / np.max(np.abs(x)) < 1e-5
    assert np.max(np.abs(back.imag)) < 1e-5 * np.max(np.abs(x))


def test_radial_grid_anchors():
    r = radial_frequency_grid(8, 8)
    assert r[0, 0] == 0
    assert r[4, 4] == pytest.approx(1.0)
    assert r[4, 0] == pytest.approx(1 / np.sqrt(2))
    assert r.max() <= 1.0


def test_butterworth_half_power():
    r = radial_frequency_grid(8, 8)
    spec = FreqFilterSpec(float(r[4, 0]), 3, "low")
    assert butterworth_gain(spec, 8, 8)[4, 0] == pytest.approx(0.5, abs=1e-12)


def test_butterworth_endpoints():
    assert butterworth_gain(FreqFilterSpec(0.3, 2, "low"), 6, 6)[0, 0] == 1
    assert butterworth_gain(FreqFilterSpec(0.3, 2, "high"), 6, 6)[0, 0] == 0


def test_butterworth_steep_order():
    # r = 0.5 r_c: pick r_c so that the (Nyquist, Nyquist) corner sits at half the cutoff
    g = butterworth_gain(FreqFilterSpec(1.0, 8, "low"), 8, 8)
    r = radial_frequency_grid(8, 8)
    idx = np.unravel_index(np.argmin(np.abs(r - 0.5)), r.shape)
    assert r[idx] == pytest.approx(0.5)
    assert g[idx] == pytest.approx(1 / (1 + 0.5**16), abs=1e-12)


def test_complementary_gains():
    lo = butterworth_gain(FreqFilterSpec(0.4, 3, "low"), 9, 7)
    hi = butterworth_gain(FreqFilterSpec(0.4, 3, "high"), 9, 7)
    assert np.allclose(lo + hi, 1.0)


def test_bad_cutoff():
    with pytest.raises(ParameterError):
        FreqFilterSpec(0.0)
    with pytest.raises(ParameterError):
        FreqFilterSpec(0.5, 0)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_gain_radially_monotone(n):
    r = radial_frequency_grid(16, 16).ravel()
    g = butterworth_gain(FreqFilterSpec(0.3, n, "low"), 16, 16).ravel()
    order = np.argsort(r)
    assert np.all(np.diff(g[order]) <= 1e-15)


def test_decompose_constant():
    z = np.full((2, 6, 6), 0.7, np.float32)
    lp, hp = decompose(z, 0.25, 2)
    assert np.allclose(lp, z, atol=1e-5) and np.allclose(hp, 0, atol=1e-5)


def test_decompose_checkerboard():
    rc, n = 0.5, 2
    z = checkerboard(8, 8)[None]
    _, hp = decompose(z, rc, n)
    g_high = 1 - 1 / (1 + (1 / rc) ** (2 * n))
    assert np.allclose(hp, z * g_high, atol=1e-5)


def test_decompose_random_reconstructs(rng):
    z = rng.uniform(-1, 1, (4, 8, 8)).astype(np.float32)
    lp, hp = decompose(z, 0.25)
    assert np.max(np.abs(lp + hp - z)) < 1e-5


def test_hf_ratio_constant_and_checkerboard():
    z = np.stack([np.full((8, 8), 0.3, np.float32), checkerboard(8, 8)])
    ratio = hf_energy_ratio(z, 0.8, 2)
    assert ratio[0] == pytest.approx(0.0, abs=1e-12)
    assert ratio[1] == pytest.approx(1 - 1 / (1 + (1 / 0.8) ** 4), abs=1e-9)


def test_hf_ratio_white_noise_monte_carlo():
    rng = np.random.default_rng(7)
    h = w = 16
    mask_fraction = float(np.mean(radial_frequency_grid(h, w) > 0.8))
    ratios = [hf_energy_ratio(rng.standard_normal((1, h, w)), 0.8, 40)[0] for _ in range(100)]
    assert np.mean(ratios) == pytest.approx(mask_fraction, abs=0.05)


def test_sharp_highpass():
    cb = checkerboard(8, 8)
    assert np.all(np.abs(sharp_highpass(np.full((8, 8), 3.0, np.float32))) < 1e-6)
    assert np.allclose(sharp_highpass(cb, 0.8), cb, atol=1e-5)
    mixed = cb + np.float32(0.6)
    assert np.allclose(sharp_highpass(mixed, 0.8), mixed - mixed.mean(), atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(latents, st.floats(0.05, 1.0), st.integers(1, 6))
def test_complementarity_property(z, rc, n):
    lp, hp = decompose(z, rc, n)
    assert np.max(np.abs(lp + hp - z)) < 1e-5


@settings(max_examples=30, deadline=None)
@given(latents, st.floats(-2, 2), st.floats(-2, 2))
def test_linearity_property(z, a, b):
    z2 = np.flip(z, axis=-1).copy()
    lp12, hp12 = decompose(a * z + b * z2, 0.3, 2)
    lp1, hp1 = decompose(z, 0.3, 2)
    lp2, hp2 = decompose(z2, 0.3, 2)
    assert np.allclose(lp12, a * lp1 + b * lp2, atol=1e-5)
    assert np.allclose(hp12, a * hp1 + b * hp2, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(latents)
def test_hf_ratio_in_unit_interval(z):
    for v in hf_energy_ratio(z, 0.5, 2):
        assert 0 <= v <= 1
