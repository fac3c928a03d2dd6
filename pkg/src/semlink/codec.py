"""Learned semantic encoder/decoder over packed feature vectors.

The encoder maps a packed feature vector to complex channel symbols under a
mean-power constraint; the decoder maps noisy symbols back. Training runs on
an additive-white-Gaussian surrogate channel in two steps: reconstruction loss
first, then a weighted sum of reconstruction and perception loss through the
frozen proxy head. A second codec pair can be trained on the residual of a
frozen first pair for incremental retransmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nnkit
from .scenegen import ProxyHead, Scene, perception_loss_grad
from .tensors import FeatureTensor, ImportanceMask, unpack


@dataclass(frozen=True)
class CodecConfig:
    n_in: int
    n_cu: int  # complex channel uses per transmission
    hidden: int = 192
    signal_power: float = 1.0
    prelu_alpha: float = 0.25

    def __post_init__(self):
        if self.n_in < 1 or self.n_cu < 1:
            raise ValueError("n_in and n_cu must be positive")
        if self.signal_power <= 0:
            raise ValueError("signal_power must be positive")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    lr: float = 2e-3
    recon_epochs: int = 80
    task_epochs: int = 30
    snr_lo: float = 0.0
    snr_hi: float = 18.0
    task_weight: float = 0.5  # weight on the reconstruction term in step 2

    def __post_init__(self):
        if self.snr_hi < self.snr_lo:
            raise ValueError("snr_hi must be >= snr_lo")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class SemanticCodec:
    encoder: nnkit.DenseNet
    decoder: nnkit.DenseNet
    n_cu: int
    signal_power: float = 1.0

    @property
    def n_in(self) -> int:
        return self.encoder.n_in


@dataclass
class TrainingCurve:
    recon: list = field(default_factory=list)  # step-1 per-epoch reconstruction loss
    total: list = field(default_factory=list)  # step-2 per-epoch combined loss
    task: list = field(default_factory=list)  # step-2 per-epoch perception term


@dataclass(frozen=True)
class TrainingSet:
    """Packed features plus the scene context needed for the perception term."""

    packed: np.ndarray  # (N, n_in)
    scenes: tuple[Scene, ...]
    masks: tuple[ImportanceMask, ...]
    shape: tuple[int, int, int]
    head: ProxyHead

    def __post_init__(self):
        if self.packed.ndim != 2 or self.packed.shape[0] != len(self.scenes):
            raise ValueError("packed rows must match the scene list")
        if len(self.masks) != len(self.scenes):
            raise ValueError("one mask per scene required")


def new_codec(cfg: CodecConfig, seed: int) -> SemanticCodec:
    """Fresh codec: prelu hidden layers, linear heads, paired real outputs."""
    enc = nnkit.init_dense(
        (cfg.n_in, cfg.hidden, 2 * cfg.n_cu), ("prelu", "linear"), seed, cfg.prelu_alpha
    )
    dec = nnkit.init_dense(
        (2 * cfg.n_cu, cfg.hidden, cfg.n_in), ("prelu", "linear"), seed + 1, cfg.prelu_alpha
    )
    return SemanticCodec(enc, dec, cfg.n_cu, cfg.signal_power)


def reals_to_complex(x: np.ndarray) -> np.ndarray:
    """Pair consecutive reals into complex symbols along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2 != 0:
        raise ValueError("need an even number of reals to pair into complex symbols")
    return x[..., 0::2] + 1j * x[..., 1::2]


def complex_to_reals(t: np.ndarray) -> np.ndarray:
    """Inverse of reals_to_complex."""
    t = np.asarray(t, dtype=np.complex128)
    out = np.empty(t.shape[:-1] + (2 * t.shape[-1],), dtype=np.float64)
    out[..., 0::2] = t.real
    out[..., 1::2] = t.imag
    return out


def normalize_power(t: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Scale a complex symbol vector to mean per-symbol power `power`."""
    t = np.asarray(t, dtype=np.complex128)
    energy = np.sum(np.abs(t) ** 2, axis=-1, keepdims=True)
    if np.any(energy == 0.0):
        raise ValueError("cannot power-normalize a zero-energy symbol vector")
    return np.sqrt(t.shape[-1] * power) * t / np.sqrt(energy)


def _normalize_reals(x: np.ndarray, n_cu: int, power: float) -> np.ndarray:
    """Power normalization in paired-real coordinates, rowwise."""
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(r2 == 0.0):
        raise ValueError("cannot power-normalize a zero-energy symbol vector")
    return np.sqrt(n_cu * power) * x / np.sqrt(r2)


def _normalize_reals_backward(x: np.ndarray, gy: np.ndarray, n_cu: int, power: float) -> np.ndarray:
    """Jacobian-transpose product of _normalize_reals at x."""
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    r = np.sqrt(r2)
    c = np.sqrt(n_cu * power)
    dot = np.sum(x * gy, axis=-1, keepdims=True)
    return c * (gy / r - x * dot / (r2 * r))


def encode(codec: SemanticCodec, m: np.ndarray) -> np.ndarray:
    """Packed vector -> power-normalized complex channel symbols."""
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    if m.size != codec.n_in:
        raise ValueError(f"input has {m.size} entries, encoder expects {codec.n_in}")
    reals = nnkit.forward(codec.encoder, m[None, :])[0]
    return normalize_power(reals_to_complex(reals), codec.signal_power)


def decode(codec: SemanticCodec, y: np.ndarray) -> np.ndarray:
    """Received complex symbols -> reconstructed packed vector."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if y.size != codec.n_cu:
        raise ValueError(f"received {y.size} symbols, decoder expects {codec.n_cu}")
    return nnkit.forward(codec.decoder, complex_to_reals(y)[None, :])[0]


_CODEC_MAGIC = b"SCDC"


def save_codec(path, codec: SemanticCodec) -> None:
    """Container checkpoint: symbol count, power, then encoder and decoder nets."""
    import struct

    with open(path, "wb") as fh:
        fh.write(_CODEC_MAGIC)
        fh.write(struct.pack("<Id", codec.n_cu, codec.signal_power))
        nnkit.write_net(fh, codec.encoder)
        nnkit.write_net(fh, codec.decoder)


def load_codec(path) -> SemanticCodec:
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != _CODEC_MAGIC:
            raise ValueError("not a codec checkpoint")
        n_cu, power = struct.unpack("<Id", fh.read(12))
        encoder = nnkit.read_net(fh)
        decoder = nnkit.read_net(fh)
    return SemanticCodec(encoder, decoder, n_cu, power)


def awgn(t: np.ndarray, snr_db: float, rng: np.random.Generator, power: float = 1.0) -> np.ndarray:
    """Training surrogate channel: add circular complex noise at the given SNR."""
    t = np.asarray(t, dtype=np.complex128)
    sigma2 = power / (10.0 ** (snr_db / 10.0))
    z = (rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape)) / np.sqrt(2.0)
    return t + np.sqrt(sigma2) * z


def surrogate_roundtrip(
    codec: SemanticCodec, packed: np.ndarray, snr_db: float | None, rng: np.random.Generator | None
) -> np.ndarray:
    """Batch encode -> surrogate channel -> decode, without gradients."""
    packed = np.atleast_2d(np.asarray(packed, dtype=np.float64))
    reals = nnkit.forward(codec.encoder, packed)
    xn = _normalize_reals(reals, codec.n_cu, codec.signal_power)
    if snr_db is not None:
        sigma2 = codec.signal_power / (10.0 ** (snr_db / 10.0))
        xn = xn + np.sqrt(sigma2 / 2.0) * rng.standard_normal(xn.shape)
    return nnkit.forward(codec.decoder, xn)


def _check_finite(value: float, context: str) -> None:
    if not np.isfinite(value):
        raise RuntimeError(f"training diverged ({context}: loss={value}); lower the lr")


def _step(
    codec: SemanticCodec,
    batch: np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    states,
    lr: float,
    task_ctx=None,
    task_weight: float = 0.5,
    frozen: "SemanticCodec | None" = None,
    frozen_rng: np.random.Generator | None = None,
    weight_decay: float = 0.0,
):
    """One Adam step through encoder, surrogate channel, decoder.

    With task_ctx the loss is task_weight * recon + perception; otherwise pure
    reconstruction. With `frozen` set, the loss compares against the residual
    of the frozen codec's reconstruction over an independent channel draw.
    """
    b, n_in = batch.shape
    enc_out, enc_tape = nnkit.forward_tape(codec.encoder, batch)
    xn = _normalize_reals(enc_out, codec.n_cu, codec.signal_power)
    sigma2 = codec.signal_power / (10.0 ** (snr_db / 10.0))
    y = xn + np.sqrt(sigma2 / 2.0) * rng.standard_normal(xn.shape)
    m_hat, dec_tape = nnkit.forward_tape(codec.decoder, y)

    if frozen is not None:
        # average several frozen-pair draws: same conditional-mean target as a
        # single draw, but the label noise no longer drowns the residual signal
        m_first = np.mean(
            [surrogate_roundtrip(frozen, batch, snr_db, frozen_rng) for _ in range(_FROZEN_DRAWS)],
            axis=0,
        )
        combined = m_first + m_hat
        err = combined - batch
    else:
        err = m_hat - batch

    recon = float(np.mean(err * err))
    g_mhat = 2.0 * err / err.size
    loss = recon

    if task_ctx is not None:
        scenes, masks, shape, head, idx = task_ctx
        g_mhat = task_weight * g_mhat
        task_total = 0.0
        rec = combined if frozen is not None else m_hat
        for row, i in enumerate(idx):
            f_hat = unpack(rec[row], masks[i], shape)
            l_p, g_f = perception_loss_grad(f_hat, scenes[i], head)
            task_total += l_p
            g_mhat[row] += g_f[:, masks[i].cells].reshape(-1) / b
        task_mean = task_total / b
        loss = task_weight * recon + task_mean
    _check_finite(loss, "combined step" if task_ctx is not None else "reconstruction step")

    dec_grads, g_y = nnkit.backward(codec.decoder, dec_tape, g_mhat)
    g_x = _normalize_reals_backward(enc_out, g_y, codec.n_cu, codec.signal_power)
    enc_grads, _ = nnkit.backward(codec.encoder, enc_tape, g_x)

    enc_state, dec_state = states
    codec.encoder, _ = nnkit.adam_step(
        codec.encoder, enc_grads, enc_state, lr, weight_decay=weight_decay
    )
    codec.decoder, _ = nnkit.adam_step(
        codec.decoder, dec_grads, dec_state, lr, weight_decay=weight_decay
    )
    if task_ctx is not None:
        return loss, recon, task_mean
    return loss, recon, 0.0


_LR_FLOOR = 0.05  # final lr as a fraction of the initial lr (cosine decay)
_FROZEN_DRAWS = 8  # channel draws averaged for the frozen pair's reconstruction
# The correction pair regresses against a residual that is mostly channel
# noise, so an unregularized fit picks up spurious structure that corrupts the
# combined reconstruction as often as it helps. Decoupled weight decay keeps
# only the well-supported part of the correction.
_PAIR2_WEIGHT_DECAY = 3e-3


def _epoch_lr(lr0: float, epoch: int, total: int) -> float:
    if total <= 1:
        return lr0
    floor = _LR_FLOOR * lr0
    return floor + (lr0 - floor) * 0.5 * (1.0 + math.cos(math.pi * epoch / (total - 1)))


def _run_epochs(codec, train_set, cfg, n_epochs, rng, states, with_task, curve, frozen=None, sched=None):
    packed = train_set.packed
    n = packed.shape[0]
    t0, total = sched if sched is not None else (0, n_epochs)
    for ep in range(n_epochs):
        lr = _epoch_lr(cfg.lr, t0 + ep, total)
        order = rng.permutation(n)
        ep_loss = ep_recon = ep_task = 0.0
        n_batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            snr_db = rng.uniform(cfg.snr_lo, cfg.snr_hi)
            task_ctx = None
            if with_task:
                task_ctx = (train_set.scenes, train_set.masks, train_set.shape, train_set.head, idx)
            loss, recon, task = _step(
                codec,
                packed[idx],
                snr_db,
                rng,
                states,
                lr,
                task_ctx,
                cfg.task_weight,
                frozen,
                frozen_rng=rng,
                weight_decay=_PAIR2_WEIGHT_DECAY if frozen is not None else 0.0,
            )
            ep_loss += loss
            ep_recon += recon
            ep_task += task
            n_batches += 1
        if with_task:
            curve.total.append(ep_loss / n_batches)
            curve.task.append(ep_task / n_batches)
        else:
            curve.recon.append(ep_recon / n_batches)


def train_no_harq(
    train_set: TrainingSet, codec_cfg: CodecConfig, train_cfg: TrainConfig
) -> tuple[SemanticCodec, TrainingCurve]:
    """Two-step training: reconstruction first, then combined task loss."""
    if train_set.packed.shape[1] != codec_cfg.n_in:
        raise ValueError("training set width does not match codec n_in")
    codec = new_codec(codec_cfg, train_cfg.seed)
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    states = (nnkit.AdamState.init(codec.encoder), nnkit.AdamState.init(codec.decoder))
    curve = TrainingCurve()
    total = train_cfg.recon_epochs + train_cfg.task_epochs
    _run_epochs(
        codec, train_set, train_cfg, train_cfg.recon_epochs, rng, states, False, curve,
        sched=(0, total),
    )
    _run_epochs(
        codec, train_set, train_cfg, train_cfg.task_epochs, rng, states, True, curve,
        sched=(train_cfg.recon_epochs, total),
    )
    return codec, curve


def train_harq2_pair(
    first: SemanticCodec,
    train_set: TrainingSet,
    codec_cfg: CodecConfig,
    train_cfg: TrainConfig,
) -> tuple[SemanticCodec, TrainingCurve]:
    """Train a second codec on the residual of a frozen first pair.

    The loss compares the sum of both reconstructions against the source, so
    the second pair learns to correct what the first pair misses at the
    (lower) training SNR range.
    """
    if train_set.packed.shape[1] != first.n_in:
        raise ValueError("training set width does not match the frozen codec")
    codec = new_codec(codec_cfg, train_cfg.seed)
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    states = (nnkit.AdamState.init(codec.encoder), nnkit.AdamState.init(codec.decoder))
    curve = TrainingCurve()
    total = train_cfg.recon_epochs + train_cfg.task_epochs
    _run_epochs(
        codec, train_set, train_cfg, train_cfg.recon_epochs, rng, states, False, curve,
        frozen=first, sched=(0, total),
    )
    _run_epochs(
        codec, train_set, train_cfg, train_cfg.task_epochs, rng, states, True, curve,
        frozen=first, sched=(train_cfg.recon_epochs, total),
    )
    return codec, curve
