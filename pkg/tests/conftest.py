"""Shared fixtures: one trained artifact set reused by the whole suite."""

from dataclasses import replace

import pytest

from semlink import config as config_mod
from semlink import harness


@pytest.fixture(scope="session")
def default_cfg():
    cfg = config_mod.ExperimentConfig()
    config_mod.validate_config(cfg)
    return cfg


@pytest.fixture(scope="session")
def trained_dir(default_cfg, tmp_path_factory):
    """Full default-config training run; expensive, so trained exactly once."""
    out = tmp_path_factory.mktemp("trained")
    harness.train_all(default_cfg, out)
    return out


@pytest.fixture(scope="session")
def bundle(default_cfg, trained_dir):
    return harness.load_bundle(default_cfg, trained_dir)


def tiny_config(seed: int = 9000) -> config_mod.ExperimentConfig:
    """Scaled-down config for structural tests that must train in seconds."""
    cfg = config_mod.ExperimentConfig(
        experiment=replace(
            config_mod.ExperimentSection(), master_seed=seed, sessions=8
        ),
        ofdm=config_mod.OfdmSection(l_fft=256, l_cp=24),
        scene=config_mod.SceneSection(channels=5, height=8, width=8),
        codec=replace(
            config_mod.CodecSection(),
            cr=0.1,
            n_cu=32,
            hidden=24,
            train_samples=48,
            batch_size=16,
            recon_epochs=5,
            task_epochs=2,
        ),
        detector=replace(
            config_mod.DetectorSection(),
            pool=8,
            branch_width=16,
            corpus_queries=8,
            corpus_snr_db=(0.0, 6.0, 12.0, 18.0),
            epochs=6,
            batch_queries=4,
        ),
    )
    config_mod.validate_config(cfg)
    return cfg
