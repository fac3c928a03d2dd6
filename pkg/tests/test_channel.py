"""Fading channel tests: PDP shape, response oracle, statistics, equivalence."""

import numpy as np
import pytest

from semlink import channel, ofdm
from semlink.channel import (
    ChannelProfile,
    ChannelRealization,
    apply,
    apply_time,
    default_profile,
    doppler_frequency,
    freq_response,
    noise_variance,
    realize,
    symbol_correlation,
)
from semlink.ofdm import OfdmConfig

CFG = OfdmConfig(l_fft=64, n_symbols=14, l_cp=8)
FULL = OfdmConfig()


def test_default_profile_shape():
    p = default_profile()
    assert p.n_taps == 6
    assert p.delays == tuple(0.5e-6 * m for m in range(6))
    assert abs(sum(p.powers) - 1.0) < 1e-12
    ratios = np.asarray(p.powers[1:]) / np.asarray(p.powers[:-1])
    assert np.allclose(ratios, np.exp(-1.0), atol=1e-12)
    assert abs(p.speed - 50.0 / 3.6) < 1e-12


def test_profile_validation():
    with pytest.raises(ValueError):
        ChannelProfile((0.0, 1e-6), (0.5,), 1.0)
    with pytest.raises(ValueError):
        ChannelProfile((1e-6, 0.0), (0.5, 0.5), 1.0)
    with pytest.raises(ValueError):
        ChannelProfile((0.0,), (0.9,), 1.0)
    with pytest.raises(ValueError):
        ChannelProfile((0.0,), (1.0,), -1.0)


def test_freq_response_matches_direct_sum():
    prof = default_profile()
    real = realize(prof, FULL, 14, seed=42)
    h = freq_response(real, FULL)
    rng = np.random.default_rng(0)
    for _ in range(100):
        j = int(rng.integers(0, 14))
        k = int(rng.integers(0, FULL.l_fft))
        direct = sum(
            real.taps[j, m] * np.exp(-2j * np.pi * k * FULL.subcarrier_spacing * tau)
            for m, tau in enumerate(real.delays)
        )
        assert abs(h[j, k] - direct) < 1e-12


def test_single_zero_delay_tap_is_flat():
    real = ChannelRealization(np.full((3, 1), 0.7 - 0.2j), np.array([0.0]))
    h = freq_response(real, CFG)
    assert np.allclose(h, 0.7 - 0.2j, atol=1e-15)


def test_two_tap_destructive_null():
    # equal taps, second delayed so subcarrier 16 sees a pi phase offset
    tau = 0.5 / (CFG.subcarrier_spacing * 16)
    amp = 1.0 / np.sqrt(2.0)
    real = ChannelRealization(np.array([[amp, amp]]), np.array([0.0, tau]))
    h = freq_response(real, CFG)
    assert abs(h[0, 16]) < 1e-12
    assert abs(h[0, 0] - 2 * amp) < 1e-12


def test_zero_speed_is_static():
    prof = default_profile(speed_kmh=0.0)
    assert symbol_correlation(prof, FULL) == 1.0
    real = realize(prof, FULL, 14, seed=3)
    assert np.array_equal(real.taps, np.tile(real.taps[0], (14, 1)))


def test_doppler_value():
    prof = default_profile(speed_kmh=50.0)
    expected = (50.0 / 3.6) * 2.8e9 / 2.99792458e8
    assert abs(doppler_frequency(prof, FULL) - expected) < 1e-6


def test_mean_response_power_is_unity():
    prof = default_profile()
    vals = []
    for seed in range(300):
        real = realize(prof, FULL, 2, seed=seed)
        h = freq_response(real, FULL)
        vals.append(np.mean(np.abs(h) ** 2))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - 1.0) < 3 * se + 1e-3


def test_lag_one_tap_correlation():
    prof = default_profile(speed_kmh=120.0)
    rho = symbol_correlation(prof, FULL)
    assert 0.9 < rho < 1.0
    real = realize(ChannelProfile((0.0,), (1.0,), prof.speed), FULL, 60000, seed=11)
    a = real.taps[:, 0]
    emp = np.real(np.mean(a[1:] * np.conj(a[:-1]))) / np.mean(np.abs(a) ** 2)
    assert abs(emp - rho) < 0.01


def test_stationary_tap_power_matches_profile():
    # adjacent symbols are heavily correlated, so sample across realizations
    prof = default_profile()
    draws = np.stack([realize(prof, FULL, 1, seed=s).taps[0] for s in range(2000)])
    emp = np.mean(np.abs(draws) ** 2, axis=0)
    assert np.allclose(emp, np.asarray(prof.powers), rtol=0.1)


def test_noise_variance_values():
    assert noise_variance(0.0) == 1.0
    assert abs(noise_variance(10.0) - 0.1) < 1e-15
    assert abs(noise_variance(3.0, signal_power=2.0) - 2.0 / 10 ** 0.3) < 1e-15


def test_applied_noise_power_matches_target():
    prof = default_profile()
    real = realize(prof, CFG, 14, seed=21)
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, size=14 * CFG.l_fft * 2)
    grid = ofdm.qam_map(bits, 4).reshape(14, CFG.l_fft)
    clean = apply(grid, real, CFG, snr_db=None)
    total = np.zeros(0)
    for noise_seed in range(40):
        noisy = apply(grid, real, CFG, snr_db=10.0, noise_seed=noise_seed)
        total = np.concatenate([total, np.abs(noisy - clean).ravel() ** 2])
    measured_db = -10 * np.log10(np.mean(total))
    assert abs(measured_db - 10.0) < 0.1


def test_common_noise_draw_rescales_across_snr():
    prof = default_profile()
    real = realize(prof, CFG, 14, seed=22)
    grid = np.ones((14, CFG.l_fft), dtype=complex)
    clean = apply(grid, real, CFG, snr_db=None)
    n0 = (apply(grid, real, CFG, snr_db=0.0, noise_seed=9) - clean)
    n12 = (apply(grid, real, CFG, snr_db=12.0, noise_seed=9) - clean)
    scale = np.sqrt(noise_variance(12.0) / noise_variance(0.0))
    assert np.allclose(n12, n0 * scale, rtol=1e-12)


def test_noiseless_apply_is_linear():
    prof = default_profile()
    real = realize(prof, CFG, 14, seed=23)
    rng = np.random.default_rng(2)
    g1 = rng.standard_normal((14, CFG.l_fft)) + 1j * rng.standard_normal((14, CFG.l_fft))
    g2 = rng.standard_normal((14, CFG.l_fft)) + 1j * rng.standard_normal((14, CFG.l_fft))
    lhs = apply(2.0 * g1 + 3j * g2, real, CFG, snr_db=None)
    rhs = 2.0 * apply(g1, real, CFG, snr_db=None) + 3j * apply(g2, real, CFG, snr_db=None)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_time_domain_convolution_matches_grid_multiplication():
    # delays on the sample grid and inside the CP
    sr = CFG.sample_rate
    prof = ChannelProfile(
        (0.0, 2.0 / sr, 5.0 / sr),
        (0.5, 0.3, 0.2),
        50.0 / 3.6,
    )
    real = realize(prof, CFG, 14, seed=31)
    rng = np.random.default_rng(3)
    grid = rng.standard_normal((14, CFG.l_fft)) + 1j * rng.standard_normal((14, CFG.l_fft))
    via_freq = apply(grid, real, CFG, snr_db=None)
    t = ofdm.to_time(grid, CFG)
    via_time = ofdm.from_time(apply_time(t, real, CFG), CFG)
    err = np.max(np.abs(via_time - via_freq)) / np.max(np.abs(via_freq))
    assert err < 1e-6


def test_apply_time_rejects_off_grid_delays():
    prof = default_profile()  # 0.5 us spacing is off the small-config sample grid
    real = realize(prof, CFG, 14, seed=32)
    t = np.zeros((14, CFG.l_cp + CFG.l_fft), dtype=complex)
    with pytest.raises(ValueError):
        apply_time(t, real, CFG)


def test_delay_beyond_cp_rejected():
    prof = ChannelProfile((0.0, 9e-6), (0.5, 0.5), 1.0)
    with pytest.raises(ValueError):
        realize(prof, CFG, 4, seed=0)


def test_apply_shape_mismatch():
    prof = default_profile()
    real = realize(prof, CFG, 14, seed=33)
    with pytest.raises(ValueError):
        apply(np.zeros((14, 32), dtype=complex), real, CFG, snr_db=None)


def test_realize_deterministic():
    prof = default_profile()
    a = realize(prof, CFG, 14, seed=5)
    b = realize(prof, CFG, 14, seed=5)
    c = realize(prof, CFG, 14, seed=6)
    assert np.array_equal(a.taps, b.taps)
    assert not np.array_equal(a.taps, c.taps)
