import dataclasses

import numpy as np
import pytest
from conftest import checkerboard, naive_dft2, naive_idft2
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from latentsr.config import load_config
from latentsr.errors import ConfigError, ParameterError, ShapeError
from latentsr.freq import decompose, highpass, radial_frequency_grid
from latentsr.lfim import (
    GateMaps,
    LfimConfig,
    area_resize,
    channel_gate,
    hf_delta,
    inject_hf,
    inject_lf,
    latent_detail,
    lfim_apply,
    lfim_gates,
    spatial_gate_hf,
    spatial_gate_lf,
)


def ones_gates(c, h, w):
    return GateMaps(np.ones((h, w), np.float32), np.ones(c, np.float32))


def test_lf_gate_flat_and_full():
    assert np.all(spatial_gate_lf(np.zeros((4, 4))) == 1)
    assert np.all(spatial_gate_lf(np.ones((4, 4))) == 0)


def test_lf_gate_erosion():
    detail = np.zeros((5, 5), np.float32)
    detail[2, 2] = 1.0
    gate = spatial_gate_lf(detail, erosion_radius=1)
    expected = np.ones((5, 5))
    expected[1:4, 1:4] = 0
    assert np.array_equal(gate, expected)


def test_hf_gate_powers():
    d = np.full((3, 3), 0.5, np.float32)
    d[0, 0] = 0
    assert np.all(spatial_gate_hf(d, 0.0) == 1)
    assert np.array_equal(spatial_gate_hf(d, 1.0), d)
    assert spatial_gate_hf(d, 2.0)[1, 1] == pytest.approx(0.25)


def test_channel_gate_identical_channels(rng):
    plane = rng.standard_normal((8, 8)).astype(np.float32)
    z = np.stack([plane] * 4)
    cfg = LfimConfig()
    assert np.allclose(channel_gate(z, cfg, "hf"), 0.5)
    assert np.allclose(channel_gate(z, cfg, "lf"), 0.5)


def test_channel_gate_dc_channel(rng):
    z = rng.standard_normal((4, 8, 8)).astype(np.float32)
    z[2] = 0.4
    cfg = LfimConfig()
    hf = channel_gate(z, cfg, "hf")
    lf = channel_gate(z, cfg, "lf")
    assert hf[2] < 0.5 and lf[2] > 0.5
    assert np.allclose(lf + hf, 1.0)


def test_channel_gate_bad_branch(rng):
    with pytest.raises(ParameterError):
        channel_gate(rng.standard_normal((2, 4, 4)), LfimConfig(), "mid")


def test_inject_lf_zero_alpha_bitwise(rng):
    z = rng.standard_normal((3, 8, 8)).astype(np.float32)
    z[0, 0, 0] = -0.0
    out = inject_lf(z, np.zeros((8, 8)), LfimConfig(lf_alpha=0.0))
    assert out.tobytes() == z.tobytes()


def test_inject_lf_constant_doubles():
    z = np.full((2, 6, 6), 0.3, np.float32)
    out = inject_lf(z, np.zeros((6, 6)), LfimConfig(lf_alpha=1.0), gates=ones_gates(2, 6, 6))
    assert np.allclose(out, 2 * z, atol=1e-5)


def test_inject_lf_matches_naive_dft_oracle(rng):
    cfg = LfimConfig(lf_alpha=0.2)
    z = rng.standard_normal((4, 8, 8)).astype(np.float32)
    gain = 1 / (1 + (radial_frequency_grid(8, 8) / cfg.lf_cutoff) ** (2 * cfg.order))
    delta = np.stack([naive_idft2(naive_dft2(c) * gain).real for c in z])
    out = inject_lf(z, np.zeros((8, 8)), cfg, gates=ones_gates(4, 8, 8))
    assert np.allclose(out, z + 0.2 * delta, atol=1e-4)


def test_inject_hf_zero_beta_bitwise(rng):
    z = rng.standard_normal((3, 8, 8)).astype(np.float32)
    out = inject_hf(z, np.ones((8, 8)), LfimConfig(hf_beta=0.0))
    assert out.tobytes() == z.tobytes()


def test_inject_hf_constant_noop():
    z = np.full((3, 8, 8), -0.2, np.float32)
    out = inject_hf(z, np.ones((8, 8)), LfimConfig(hf_beta=0.5))
    assert np.allclose(out, z, atol=1e-5)


def test_inject_hf_diff_identical_reference(rng):
    z = rng.standard_normal((3, 8, 8)).astype(np.float32)
    cfg = LfimConfig(hf_use_diff=True)
    assert np.array_equal(inject_hf(z, np.ones((8, 8)), cfg, z_ref=z), z)


def test_inject_hf_diff_requires_reference(rng):
    z = rng.standard_normal((3, 8, 8)).astype(np.float32)
    with pytest.raises(ParameterError):
        inject_hf(z, np.ones((8, 8)), LfimConfig(hf_use_diff=True))
    with pytest.raises(ParameterError):
        lfim_apply(z, np.ones((8, 8)), LfimConfig(hf_use_diff=True))


def test_inject_hf_diff_uses_difference(rng):
    z = rng.standard_normal((2, 8, 8)).astype(np.float32)
    ref = rng.standard_normal((2, 8, 8)).astype(np.float32)
    cfg = LfimConfig(hf_use_diff=True)
    expected = highpass(z, cfg.hf_cutoff, cfg.order).astype(np.float64) - highpass(ref, cfg.hf_cutoff, cfg.order)
    assert np.allclose(hf_delta(z, cfg, ref), expected)


def test_detail_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        inject_lf(rng.standard_normal((2, 8, 8)), np.zeros((4, 4)), LfimConfig())


def test_apply_zero_intensities_identity(rng):
    z = rng.standard_normal((4, 16, 16)).astype(np.float32)
    out = lfim_apply(z, rng.uniform(0, 1, (64, 64)), LfimConfig(lf_alpha=0, hf_beta=0))
    assert out.tobytes() == z.tobytes()


def test_apply_defaults_match_two_step_trace(rng):
    cfg = LfimConfig()
    assert (cfg.lf_alpha, cfg.hf_beta) == (0.2, 0.2)
    z = rng.standard_normal((4, 8, 8)).astype(np.float32)
    detail_img = rng.uniform(0, 1, (64, 64)).astype(np.float32)
    out = lfim_apply(z, detail_img, cfg)
    assert not np.array_equal(out, z)

    # independent trace: area-average 8x8 blocks, gates from z, LF then HF
    d = detail_img.reshape(8, 8, 8, 8).mean(axis=(1, 3))
    assert np.allclose(latent_detail(detail_img, (8, 8)), d, atol=1e-6)
    g_lf, g_hf = lfim_gates(z, latent_detail(detail_img, (8, 8)), cfg)
    step1 = inject_lf(z, latent_detail(detail_img, (8, 8)), cfg, gates=g_lf)
    step2 = inject_hf(step1, latent_detail(detail_img, (8, 8)), cfg, gates=g_hf)
    assert step2.tobytes() == out.tobytes()

    lp, _ = decompose(z, cfg.lf_cutoff, cfg.order)
    manual1 = z.astype(np.float64) + 0.2 * (1 - d)[None] * g_lf.m_ch[:, None, None] * lp
    hp = highpass(step1, cfg.hf_cutoff, cfg.order)
    manual2 = step1.astype(np.float64) + 0.2 * d[None] * g_hf.m_ch[:, None, None] * hp
    assert np.allclose(step1, manual1, atol=1e-5)
    assert np.allclose(out, manual2, atol=1e-5)


def test_apply_affine_in_intensities(rng):
    z = rng.standard_normal((3, 8, 8)).astype(np.float32)
    detail = rng.uniform(0, 1, (8, 8)).astype(np.float32)
    base = LfimConfig()

    def run(a, b):
        return lfim_apply(z, detail, dataclasses.replace(base, lf_alpha=a, hf_beta=b)).astype(np.float64)

    a, b = 0.15, 0.3
    assert np.allclose(run(2 * a, b) - run(a, b), run(a, b) - run(0, b), atol=1e-5)
    assert np.allclose(run(a, 2 * b) - run(a, b), run(a, b) - run(a, 0), atol=1e-5)


def test_pure_dc_hf_noop_and_nyquist_ratio():
    cfg = LfimConfig(lf_alpha=0.3, hf_beta=0.3, lf_cutoff=0.5, order=2)
    dc = np.full((1, 8, 8), 0.5, np.float32)
    half = np.full((8, 8), 0.5, np.float32)
    assert np.allclose(inject_hf(dc, half, cfg), dc, atol=1e-5)
    ny = checkerboard(8, 8)[None]
    lf_change = np.linalg.norm(inject_lf(ny, half, cfg).astype(np.float64) - ny)
    hf_change = np.linalg.norm(inject_hf(ny, half, cfg).astype(np.float64) - ny)
    assert lf_change < 0.1 * hf_change


@settings(max_examples=30, deadline=None)
@given(
    hnp.arrays(np.float32, (3, 8, 8), elements=st.floats(-1, 1, width=32)),
    hnp.arrays(np.float32, (8, 8), elements=st.floats(0, 1, width=32)),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_apply_bounded_delta(z, detail, a, b):
    cfg = LfimConfig(lf_alpha=a, hf_beta=b)
    out = lfim_apply(z, detail, cfg)
    lp, _ = decompose(z, cfg.lf_cutoff, cfg.order)
    z1 = inject_lf(z, detail, cfg, gates=lfim_gates(z, detail, cfg)[0])
    hp = highpass(z1, cfg.hf_cutoff, cfg.order)
    bound = a * np.abs(lp).max() + b * np.abs(hp).max()
    assert np.max(np.abs(out.astype(np.float64) - z)) <= bound + 1e-5


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float32, (4, 6, 6), elements=st.floats(-1, 1, width=32)))
def test_gates_in_range_and_complementary(z):
    cfg = LfimConfig()
    lf, hf = channel_gate(z, cfg, "lf"), channel_gate(z, cfg, "hf")
    assert np.all((lf >= 0) & (lf <= 1) & (hf >= 0) & (hf <= 1))
    assert np.allclose(lf + hf, 1.0)


def test_area_resize_non_divisible(rng):
    p = rng.uniform(0, 1, (10, 7))
    out = area_resize(p, (3, 3))
    assert out.shape == (3, 3)
    assert out.mean() == pytest.approx(p.mean())


def test_config_file(tmp_path):
    path = tmp_path / "lfim.cfg"
    path.write_text("lf_alpha=0.1\nhf_beta = 0.3\n# comment\nhf_use_diff=true\norder=4\n")
    cfg = load_config(LfimConfig, path)
    assert cfg.lf_alpha == 0.1 and cfg.hf_beta == 0.3 and cfg.hf_use_diff is True and cfg.order == 4


def test_config_unknown_key(tmp_path):
    path = tmp_path / "lfim.cfg"
    path.write_text("lf_alpha=0.1\nlf_beta=0.3\n")
    with pytest.raises(ConfigError, match="lf_beta"):
        load_config(LfimConfig, path)


def test_config_bad_range(tmp_path):
    path = tmp_path / "lfim.cfg"
    path.write_text("lf_cutoff=0\n")
    with pytest.raises(ConfigError):
        load_config(LfimConfig, path)
