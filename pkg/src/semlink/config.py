"""Experiment configuration: one INI file drives training, sweeps and goldens.

The file format is deliberately flat.  Every section that appears must be
complete; a missing key is a config error that names the field, so stale
files fail loudly instead of silently picking up new defaults.  Sections
that are absent entirely fall back to the built-in defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace

from .channel import ChannelProfile, default_profile
from .codec import CodecConfig, TrainConfig
from .detector import DetectorConfig, RankTrainConfig
from .ofdm import QAM_ORDERS, OfdmConfig
from .scenegen import SceneConfig


@dataclass(frozen=True)
class ExperimentSection:
    master_seed: int = 2024
    sessions: int = 200
    snr_db: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0)
    modes: tuple[str, ...] = ("noharq", "sim1", "sim2", "base1")
    round_budget: int = 3
    workers: int = 1


@dataclass(frozen=True)
class OfdmSection:
    l_fft: int = 2048
    n_symbols: int = 14
    pilot_symbols: tuple[int, ...] = (3, 12)
    l_cp: int = 144
    subcarrier_spacing: float = 15e3
    carrier_freq: float = 2.8e9
    retransmission_interval: float = 2e-3


@dataclass(frozen=True)
class ChannelSection:
    speed_kmh: float = 50.0
    n_taps: int = 6
    tap_spacing: float = 0.5e-6
    tap_decay: float = 0.5e-6


@dataclass(frozen=True)
class SceneSection:
    channels: int = 8
    height: int = 16
    width: int = 16
    object_rate: float = 0.06
    target_scale: float = 1.0
    # keep class logits inside the sigmoid's sensitive range so confidence
    # maps stay informative about reception quality even at high SNR
    logit_amp: float = 2.0
    feature_noise: float = 0.1


@dataclass(frozen=True)
class CodecSection:
    cr: float = 0.05
    n_cu: int = 256
    hidden: int = 192
    train_samples: int = 512
    batch_size: int = 64
    lr: float = 2e-3
    recon_epochs: int = 80
    task_epochs: int = 30
    task_weight: float = 0.5
    snr_lo: float = 0.0
    snr_hi: float = 18.0


@dataclass(frozen=True)
class PairSection:
    """SNR band override for one retransmission stage codec."""

    snr_lo: float
    snr_hi: float


@dataclass(frozen=True)
class DetectorSection:
    ack_threshold: float = 0.72
    sharpness: float = 1.0
    pool: int = 16
    branch_width: int = 64
    corpus_queries: int = 160
    corpus_snr_db: tuple[float, ...] = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0)
    epochs: int = 50
    lr: float = 2e-4
    holdout: float = 0.25
    weight_decay: float = 5e-2
    batch_queries: int = 8


@dataclass(frozen=True)
class BaselineSection:
    mod_order: int = 16
    code_copies: int = 2


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    ofdm: OfdmSection = field(default_factory=OfdmSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    scene: SceneSection = field(default_factory=SceneSection)
    codec: CodecSection = field(default_factory=CodecSection)
    codec_pair1: PairSection = field(default_factory=lambda: PairSection(9.0, 18.0))
    codec_pair2: PairSection = field(default_factory=lambda: PairSection(0.0, 6.0))
    detector: DetectorSection = field(default_factory=DetectorSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)

    # ---- derived views consumed by the rest of the package ----

    def ofdm_config(self) -> OfdmConfig:
        o = self.ofdm
        return OfdmConfig(
            l_fft=o.l_fft,
            n_symbols=o.n_symbols,
            pilot_symbols=o.pilot_symbols,
            l_cp=o.l_cp,
            subcarrier_spacing=o.subcarrier_spacing,
            carrier_freq=o.carrier_freq,
            retransmission_interval=o.retransmission_interval,
        )

    def channel_profile(self) -> ChannelProfile:
        c = self.channel
        return default_profile(
            speed_kmh=c.speed_kmh,
            n_taps=c.n_taps,
            spacing=c.tap_spacing,
            decay=c.tap_decay,
        )

    def scene_config(self) -> SceneConfig:
        s = self.scene
        return SceneConfig(
            channels=s.channels,
            height=s.height,
            width=s.width,
            object_rate=s.object_rate,
            target_scale=s.target_scale,
            logit_amp=s.logit_amp,
            feature_noise=s.feature_noise,
        )

    def mask_cells(self) -> int:
        s = self.scene
        return int(math.ceil(self.codec.cr * s.height * s.width))

    def packed_length(self) -> int:
        return self.scene.channels * self.mask_cells()

    def codec_config(self) -> CodecConfig:
        return CodecConfig(
            n_in=self.packed_length(),
            n_cu=self.codec.n_cu,
            hidden=self.codec.hidden,
        )

    def train_config(self, seed: int, band: PairSection | None = None,
                     task_epochs: int | None = None) -> TrainConfig:
        c = self.codec
        lo, hi = (band.snr_lo, band.snr_hi) if band is not None else (c.snr_lo, c.snr_hi)
        return TrainConfig(
            seed=seed,
            batch_size=c.batch_size,
            lr=c.lr,
            recon_epochs=c.recon_epochs,
            task_epochs=c.task_epochs if task_epochs is None else task_epochs,
            snr_lo=lo,
            snr_hi=hi,
            task_weight=c.task_weight,
        )

    def detector_config(self) -> DetectorConfig:
        d = self.detector
        return DetectorConfig(
            ack_threshold=d.ack_threshold,
            sharpness=d.sharpness,
            pool=d.pool,
            branch_width=d.branch_width,
        )

    def rank_train_config(self, seed: int) -> RankTrainConfig:
        d = self.detector
        return RankTrainConfig(
            seed=seed,
            epochs=d.epochs,
            lr=d.lr,
            sharpness=d.sharpness,
            holdout=d.holdout,
            weight_decay=d.weight_decay,
            batch_queries=d.batch_queries,
        )

    def baseline_cr(self) -> float:
        """Compression ratio granting the classical stack the same channel uses.

        The byte pipeline spends 8 bits per kept value plus a fixed integrity
        tag, coded at rate 1/copies, so the number of kept cells is the largest
        one whose coded payload fits the learned codec's symbol budget.
        """
        b = self.baseline
        bits_per_use = math.log2(b.mod_order) / b.code_copies
        budget_bits = self.codec.n_cu * bits_per_use
        from .harq import CRC24_BITS

        k = int((budget_bits - CRC24_BITS) // (8 * self.scene.channels))
        if k < 1:
            raise ValueError(
                "baseline.mod_order too small: no payload fits the symbol budget"
            )
        cells = self.scene.height * self.scene.width
        return min(1.0, k / cells)


_SECTION_TYPES = {
    "experiment": ExperimentSection,
    "ofdm": OfdmSection,
    "channel": ChannelSection,
    "scene": SceneSection,
    "codec": CodecSection,
    "codec_pair1": PairSection,
    "codec_pair2": PairSection,
    "detector": DetectorSection,
    "baseline": BaselineSection,
}


def _parse_value(section: str, key: str, raw: str, annotation: str):
    raw = raw.strip()
    try:
        if annotation == "int":
            return int(raw)
        if annotation == "float":
            return float(raw)
        if annotation.startswith("tuple[float"):
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if annotation.startswith("tuple[int"):
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        if annotation.startswith("tuple[str"):
            return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ValueError(f"bad value for {section}.{key}: {exc}") from None
    raise ValueError(f"unsupported field type for {section}.{key}")


def _load_section(parser: configparser.ConfigParser, name: str, cls):
    """Materialize one section; present sections must list every key."""
    if not parser.has_section(name):
        if cls is PairSection:
            return None
        return cls()
    spec = {f.name: f for f in fields(cls)}
    seen = set()
    values = {}
    for key, raw in parser.items(name):
        if key not in spec:
            raise ValueError(f"unknown field: {name}.{key}")
        ann = spec[key].type
        ann = ann if isinstance(ann, str) else getattr(ann, "__name__", str(ann))
        values[key] = _parse_value(name, key, raw, ann)
        seen.add(key)
    missing = sorted(set(spec) - seen)
    if missing:
        raise ValueError(f"missing field: {name}.{missing[0]}")
    return cls(**values)


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(str(path))
    if not read:
        raise ValueError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            raise ValueError(f"unknown section: {section}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        loaded = _load_section(parser, name, cls)
        if loaded is not None:
            kwargs[name.replace("-", "_")] = loaded
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    e = cfg.experiment
    if e.sessions < 1:
        raise ValueError("bad value for experiment.sessions: must be >= 1")
    if e.round_budget < 1:
        raise ValueError("bad value for experiment.round_budget: must be >= 1")
    if e.workers < 1:
        raise ValueError("bad value for experiment.workers: must be >= 1")
    known_modes = {"noharq", "sim1", "sim2", "base1", "base2"}
    for mode in e.modes:
        if mode not in known_modes:
            raise ValueError(f"bad value for experiment.modes: unknown mode {mode!r}")
    if not 0.0 < cfg.codec.cr <= 1.0:
        raise ValueError("bad value for codec.cr: must be in (0, 1]")
    if cfg.baseline.mod_order not in QAM_ORDERS:
        raise ValueError(
            f"bad value for baseline.mod_order: must be one of {QAM_ORDERS}"
        )
    if cfg.baseline.code_copies < 1:
        raise ValueError("bad value for baseline.code_copies: must be >= 1")
    if cfg.detector.pool > min(cfg.scene.height, cfg.scene.width):
        raise ValueError("bad value for detector.pool: exceeds scene grid")
    if cfg.scene.channels < 5:
        raise ValueError("bad value for scene.channels: need at least 5")
    cfg.ofdm_config()
    cfg.channel_profile()
    cfg.baseline_cr()


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, experiment=replace(cfg.experiment, master_seed=seed))


def default_config_text() -> str:
    """Render the built-in defaults as a complete INI document."""
    cfg = ExperimentConfig()
    lines = []
    for name, cls in _SECTION_TYPES.items():
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(cls):
            val = getattr(section, f.name)
            if isinstance(val, tuple):
                rendered = ",".join(_render_scalar(v) for v in val)
            else:
                rendered = _render_scalar(val)
            lines.append(f"{f.name} = {rendered}")
        lines.append("")
    return "\n".join(lines)


def _render_scalar(val) -> str:
    if isinstance(val, float):
        return format(val, ".10g")
    return str(val)
