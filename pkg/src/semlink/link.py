"""One-shot physical link: frame, fade, estimate, equalize, extract.

Shared by codec evaluation, detector corpus construction, and the
retransmission protocols. Channel and noise draws are controlled by explicit
seeds so sessions are reproducible and SNR sweeps can share common draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as chan
from . import ofdm, rxdsp


@dataclass(frozen=True)
class LinkSeeds:
    pilot: int
    channel: int
    noise: int


def transmit_symbols(
    symbols: np.ndarray,
    cfg: ofdm.OfdmConfig,
    profile: chan.ChannelProfile,
    snr_db: float | None,
    seeds: LinkSeeds,
    signal_power: float = 1.0,
) -> np.ndarray:
    """Send payload symbols through one faded OFDM frame; return equalized payload."""
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    grid = ofdm.frame_build(symbols, cfg, seeds.pilot)
    real = chan.realize(profile, cfg, cfg.n_symbols, seeds.channel)
    rx = chan.apply(grid.grid, real, cfg, snr_db, seeds.noise, signal_power)
    noise_var = 0.0 if snr_db is None else chan.noise_variance(snr_db, signal_power)
    est = rxdsp.estimate(rx, ofdm.pilot_rows(cfg, seeds.pilot), cfg, noise_var)
    eq = rxdsp.equalize_mmse(rx, est, signal_power)
    return ofdm.frame_extract(eq, cfg, symbols.size)


def transmit_with_state(
    symbols: np.ndarray,
    cfg: ofdm.OfdmConfig,
    profile: chan.ChannelProfile,
    snr_db: float | None,
    seeds: LinkSeeds,
    signal_power: float = 1.0,
):
    """transmit_symbols variant that also returns per-symbol channel state.

    Returns (equalized payload, estimated H at the payload cells, noise_var);
    the channel state is what symbol-level combining across rounds needs.
    """
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    grid = ofdm.frame_build(symbols, cfg, seeds.pilot)
    real = chan.realize(profile, cfg, cfg.n_symbols, seeds.channel)
    rx = chan.apply(grid.grid, real, cfg, snr_db, seeds.noise, signal_power)
    noise_var = 0.0 if snr_db is None else chan.noise_variance(snr_db, signal_power)
    est = rxdsp.estimate(rx, ofdm.pilot_rows(cfg, seeds.pilot), cfg, noise_var)
    eq = rxdsp.equalize_mmse(rx, est, signal_power)
    h_payload = ofdm.frame_extract(est.h, cfg, symbols.size)
    return ofdm.frame_extract(eq, cfg, symbols.size), h_payload, noise_var
