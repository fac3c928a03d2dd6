"""Configuration loading, validation, and derived-view tests."""

import math

import pytest

from semlink import config as config_mod
from semlink.config import (
    ExperimentConfig,
    default_config_text,
    load_config,
    validate_config,
    with_seed,
)


def test_defaults_validate():
    cfg = ExperimentConfig()
    validate_config(cfg)
    assert cfg.experiment.master_seed == 2024
    assert cfg.experiment.snr_db == (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0)
    assert cfg.ofdm.l_fft == 2048
    assert cfg.ofdm.pilot_symbols == (3, 12)
    assert cfg.channel.n_taps == 6
    assert cfg.codec_pair1.snr_lo == 9.0
    assert cfg.codec_pair2.snr_hi == 6.0


def test_default_text_roundtrip(tmp_path):
    path = tmp_path / "default.ini"
    path.write_text(default_config_text())
    cfg = load_config(path)
    assert cfg == ExperimentConfig()


def test_load_modified_value(tmp_path):
    text = default_config_text().replace("master_seed = 2024", "master_seed = 11")
    path = tmp_path / "c.ini"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.experiment.master_seed == 11


def test_missing_file():
    with pytest.raises(ValueError, match="not found"):
        load_config("/nonexistent/path.ini")


def test_unknown_section(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ValueError, match="unknown section: nonsense"):
        load_config(path)


def test_unknown_field(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[ofdm]\nbogus_key = 3\n")
    with pytest.raises(ValueError, match="unknown field: ofdm.bogus_key"):
        load_config(path)


def test_present_section_must_be_complete(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nmaster_seed = 5\n")
    with pytest.raises(ValueError, match="missing field: experiment"):
        load_config(path)


def test_bad_value_reports_location(tmp_path):
    text = default_config_text().replace("l_fft = 2048", "l_fft = not_a_number")
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ValueError, match="bad value for ofdm.l_fft"):
        load_config(path)


def test_validate_rejects_bad_mode():
    from dataclasses import replace

    cfg = ExperimentConfig()
    bad = replace(cfg, experiment=replace(cfg.experiment, modes=("warp",)))
    with pytest.raises(ValueError, match="unknown mode"):
        validate_config(bad)


def test_validate_rejects_bad_cr():
    from dataclasses import replace

    cfg = ExperimentConfig()
    bad = replace(cfg, codec=replace(cfg.codec, cr=0.0))
    with pytest.raises(ValueError, match="codec.cr"):
        validate_config(bad)


def test_validate_rejects_bad_mod_order():
    from dataclasses import replace

    cfg = ExperimentConfig()
    bad = replace(cfg, baseline=replace(cfg.baseline, mod_order=8))
    with pytest.raises(ValueError, match="mod_order"):
        validate_config(bad)


def test_validate_rejects_oversized_pool():
    from dataclasses import replace

    cfg = ExperimentConfig()
    bad = replace(cfg, detector=replace(cfg.detector, pool=64))
    with pytest.raises(ValueError, match="detector.pool"):
        validate_config(bad)


def test_with_seed():
    cfg = ExperimentConfig()
    reseeded = with_seed(cfg, 999)
    assert reseeded.experiment.master_seed == 999
    assert cfg.experiment.master_seed == 2024
    assert reseeded.ofdm == cfg.ofdm


def test_packed_length_derivation():
    cfg = ExperimentConfig()
    cells = math.ceil(cfg.codec.cr * cfg.scene.height * cfg.scene.width)
    assert cfg.mask_cells() == cells
    assert cfg.packed_length() == cfg.scene.channels * cells
    assert cfg.packed_length() == 104


def test_derived_views_match_sections():
    cfg = ExperimentConfig()
    ofdm = cfg.ofdm_config()
    assert ofdm.l_fft == cfg.ofdm.l_fft
    assert ofdm.pilot_symbols == cfg.ofdm.pilot_symbols
    prof = cfg.channel_profile()
    assert prof.n_taps == cfg.channel.n_taps
    assert abs(prof.speed - cfg.channel.speed_kmh / 3.6) < 1e-12
    scene = cfg.scene_config()
    assert scene.logit_amp == cfg.scene.logit_amp
    det_cfg = cfg.detector_config()
    assert det_cfg.ack_threshold == cfg.detector.ack_threshold
    ccfg = cfg.codec_config()
    assert ccfg.n_in == cfg.packed_length()
    assert ccfg.n_cu == cfg.codec.n_cu


def test_train_config_band_override():
    cfg = ExperimentConfig()
    t1 = cfg.train_config(5, band=cfg.codec_pair1)
    assert (t1.snr_lo, t1.snr_hi) == (9.0, 18.0)
    t2 = cfg.train_config(5, band=cfg.codec_pair2, task_epochs=0)
    assert (t2.snr_lo, t2.snr_hi) == (0.0, 6.0)
    assert t2.task_epochs == 0


def test_baseline_cr_budget_math():
    # kept cells: largest k with 8*channels*k + 24 CRC bits inside the coded
    # bit budget of n_cu symbols
    cfg = ExperimentConfig()
    bits_per_use = math.log2(cfg.baseline.mod_order) / cfg.baseline.code_copies
    budget = cfg.codec.n_cu * bits_per_use
    k = int((budget - 24) // (8 * cfg.scene.channels))
    assert cfg.baseline_cr() == k / (cfg.scene.height * cfg.scene.width)
    assert 0.0 < cfg.baseline_cr() <= cfg.codec.cr
