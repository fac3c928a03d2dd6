"""Tapped-delay-line fading channel with per-symbol Gauss-Markov evolution.

Each tap is a circular complex Gaussian whose symbol-to-symbol correlation is
the zeroth-order Bessel value at the Doppler rate. The default evaluation path
applies the channel multiplicatively on the resource grid; a time-domain
convolution path exists for equivalence checks against the CP/FFT chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .ofdm import OfdmConfig

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class ChannelProfile:
    delays: tuple[float, ...]  # seconds, ascending, first tap at 0
    powers: tuple[float, ...]  # mean tap powers, sum to 1
    speed: float  # m/s

    def __post_init__(self):
        if len(self.delays) != len(self.powers) or not self.delays:
            raise ValueError("delays and powers must be equal-length and non-empty")
        d = np.asarray(self.delays, dtype=np.float64)
        p = np.asarray(self.powers, dtype=np.float64)
        if np.any(d < 0) or np.any(np.diff(d) <= 0) and len(d) > 1:
            raise ValueError("delays must be non-negative and strictly ascending")
        if np.any(p <= 0):
            raise ValueError("tap powers must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"tap powers must sum to 1, got {p.sum()}")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    @property
    def n_taps(self) -> int:
        return len(self.delays)


def default_profile(speed_kmh: float = 50.0, n_taps: int = 6, spacing: float = 0.5e-6,
                    decay: float = 0.5e-6) -> ChannelProfile:
    """Exponential power-delay profile on uniformly spaced taps."""
    delays = np.arange(n_taps) * spacing
    powers = np.exp(-delays / decay)
    powers /= powers.sum()
    return ChannelProfile(tuple(delays.tolist()), tuple(powers.tolist()), speed_kmh / 3.6)


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray  # (n_symbols, n_taps) complex tap amplitudes
    delays: np.ndarray  # (n_taps,) seconds

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        delays = np.asarray(self.delays, dtype=np.float64)
        if taps.ndim != 2 or delays.shape != (taps.shape[1],):
            raise ValueError("taps must be (n_symbols, n_taps) matching delays")
        taps.setflags(write=False)
        delays.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "delays", delays)

    @property
    def n_symbols(self) -> int:
        return self.taps.shape[0]


def doppler_frequency(profile: ChannelProfile, cfg: OfdmConfig) -> float:
    return profile.speed * cfg.carrier_freq / SPEED_OF_LIGHT


def symbol_correlation(profile: ChannelProfile, cfg: OfdmConfig) -> float:
    """First-order tap correlation between adjacent OFDM symbols."""
    return float(j0(2.0 * np.pi * doppler_frequency(profile, cfg) * cfg.symbol_duration))


def _check_delays(profile: ChannelProfile, cfg: OfdmConfig) -> None:
    cp_duration = cfg.l_cp / cfg.sample_rate
    if max(profile.delays) >= cp_duration:
        raise ValueError(
            f"max tap delay {max(profile.delays):.3e} s must stay below the CP "
            f"duration {cp_duration:.3e} s"
        )


def realize(profile: ChannelProfile, cfg: OfdmConfig, n_symbols: int, seed: int) -> ChannelRealization:
    """Draw tap trajectories for n_symbols OFDM symbols.

    Taps start in the stationary distribution and evolve as a first-order
    Gauss-Markov process, so per-symbol variance stays at the profile power and
    the lag-1 correlation equals symbol_correlation.
    """
    _check_delays(profile, cfg)
    rng = np.random.Generator(np.random.PCG64(seed))
    m = profile.n_taps
    p = np.asarray(profile.powers)
    rho = symbol_correlation(profile, cfg)
    innov_scale = np.sqrt(max(0.0, 1.0 - rho * rho))

    def draw(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    taps = np.empty((n_symbols, m), dtype=np.complex128)
    taps[0] = np.sqrt(p) * draw(m)
    for j in range(1, n_symbols):
        taps[j] = rho * taps[j - 1] + innov_scale * np.sqrt(p) * draw(m)
    return ChannelRealization(taps, np.asarray(profile.delays))


def freq_response(real: ChannelRealization, cfg: OfdmConfig) -> np.ndarray:
    """Per-symbol frequency response H[j, k] = sum_m a_m(j) exp(-2i pi k df tau_m)."""
    k = np.arange(cfg.l_fft)
    phases = np.exp(-2j * np.pi * cfg.subcarrier_spacing * np.outer(k, real.delays))
    return real.taps @ phases.T


def noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    """Per-complex-symbol noise variance for an SNR defined on mean signal power."""
    return signal_power / (10.0 ** (snr_db / 10.0))


def apply(
    grid: np.ndarray,
    real: ChannelRealization,
    cfg: OfdmConfig,
    snr_db: float | None,
    noise_seed: int = 0,
    signal_power: float = 1.0,
) -> np.ndarray:
    """Multiply the grid by the frequency response and add white noise.

    snr_db=None disables noise. The noise realization depends only on
    noise_seed and the grid shape, so sweeping SNR with a fixed seed rescales
    one common draw.
    """
    grid = np.asarray(grid, dtype=np.complex128)
    if grid.shape != (real.n_symbols, cfg.l_fft):
        raise ValueError(f"grid shape {grid.shape} does not match realization/config")
    rx = freq_response(real, cfg) * grid
    if snr_db is not None:
        rng = np.random.Generator(np.random.PCG64(noise_seed))
        z = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) / np.sqrt(2.0)
        rx = rx + np.sqrt(noise_variance(snr_db, signal_power)) * z
    return rx


def apply_time(samples: np.ndarray, real: ChannelRealization, cfg: OfdmConfig) -> np.ndarray:
    """Time-domain tap convolution of CP-extended symbols (noiseless).

    Tap delays must sit on the sample grid and inside the CP; samples that
    would reach back across the symbol boundary land in the CP region only,
    which the receiver discards, so they are left zero.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape != (real.n_symbols, cfg.l_cp + cfg.l_fft):
        raise ValueError(f"sample block shape {samples.shape} does not match config")
    d_samples = np.asarray(real.delays) * cfg.sample_rate
    d_int = np.round(d_samples).astype(int)
    if np.max(np.abs(d_samples - d_int)) > 1e-6:
        raise ValueError("time-domain path requires tap delays on the sample grid")
    if np.any(d_int > cfg.l_cp):
        raise ValueError("tap delays must not exceed the CP length")
    out = np.zeros_like(samples)
    for m, d in enumerate(d_int):
        shifted = np.zeros_like(samples)
        if d == 0:
            shifted[:, :] = samples
        else:
            shifted[:, d:] = samples[:, :-d]
        out += real.taps[:, m : m + 1] * shifted
    return out
