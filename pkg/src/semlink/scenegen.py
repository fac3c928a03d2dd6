"""Synthetic perception scenes and the frozen proxy readout head.

A scene is a sparse grid of active cells, each carrying a 4-dim regression
target and a binary occupancy label. A frozen random linear head reads a
feature tensor out to per-cell regression values and class logits; scenes are
lifted into feature space through the head's adjoint, so a clean feature reads
out to the scene targets exactly and corruption shows up as perception loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensors import ConfidenceMap, FeatureTensor

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
SIMILARITY_CAP = 6.0
N_REGRESSION = 4


@dataclass(frozen=True)
class SceneConfig:
    channels: int = 8
    height: int = 16
    width: int = 16
    object_rate: float = 0.06  # mean fraction of active cells
    target_scale: float = 1.0
    logit_amp: float = 4.0  # clean features read out to +/- this class logit
    feature_noise: float = 0.1

    def __post_init__(self):
        if self.channels < N_REGRESSION + 1:
            raise ValueError("need at least 5 channels to carry the readout")
        if not 0.0 < self.object_rate <= 1.0:
            raise ValueError(f"object_rate must be in (0, 1], got {self.object_rate}")


@dataclass(frozen=True)
class Scene:
    targets: np.ndarray  # (H, W, 4)
    labels: np.ndarray  # (H, W) in {0, 1}

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=np.float64)
        labels = np.asarray(self.labels)
        if targets.ndim != 3 or targets.shape[2] != N_REGRESSION:
            raise ValueError(f"targets must be (H, W, {N_REGRESSION})")
        if labels.shape != targets.shape[:2]:
            raise ValueError("labels plane must match targets plane")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be binary")
        targets.setflags(write=False)
        labels = labels.astype(np.uint8)
        labels.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "labels", labels)

    @property
    def n_active(self) -> int:
        return int(self.labels.sum())


class ProxyHead:
    """Frozen random linear readout from C channels to 4 regressions + 1 logit.

    The (C, 5) basis has orthonormal columns, so the adjoint is an exact right
    inverse of the readout: readout(adjoint(y)) == y.
    """

    def __init__(self, basis: np.ndarray):
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] != N_REGRESSION + 1:
            raise ValueError(f"basis must be (C, {N_REGRESSION + 1})")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(N_REGRESSION + 1), atol=1e-9):
            raise ValueError("basis columns must be orthonormal")
        basis.setflags(write=False)
        self.basis = basis

    @classmethod
    def from_seed(cls, seed: int, channels: int) -> "ProxyHead":
        if channels < N_REGRESSION + 1:
            raise ValueError("need at least 5 channels")
        rng = np.random.Generator(np.random.PCG64(seed))
        raw = rng.standard_normal((channels, N_REGRESSION + 1))
        q, r = np.linalg.qr(raw)
        # fix the gauge so the head is unique given the seed
        q = q * np.sign(np.diag(r))[None, :]
        return cls(q)

    def readout(self, f: FeatureTensor) -> tuple[np.ndarray, np.ndarray]:
        """Feature (C, H, W) -> regression (H, W, 4) and class logits (H, W)."""
        out = np.einsum("chw,cr->hwr", f.data, self.basis)
        return out[:, :, :N_REGRESSION], out[:, :, N_REGRESSION]

    def adjoint(self, reg: np.ndarray, logits: np.ndarray) -> np.ndarray:
        """Lift per-cell readout values back into a (C, H, W) feature array."""
        y = np.concatenate([reg, logits[:, :, None]], axis=2)
        return np.einsum("hwr,cr->chw", y, self.basis)


def generate_scene(seed: int, cfg: SceneConfig, head: ProxyHead) -> tuple[Scene, FeatureTensor]:
    """Sample a sparse scene and its noisy feature-space embedding.

    The number of active cells is Poisson(object_rate * H * W), clipped to the
    grid; the feature is the head adjoint of the per-cell readout targets plus
    Gaussian nuisance noise.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    h, w = cfg.height, cfg.width
    n_cells = h * w
    n_active = min(int(rng.poisson(cfg.object_rate * n_cells)), n_cells)
    labels = np.zeros(n_cells, dtype=np.uint8)
    if n_active > 0:
        labels[rng.choice(n_cells, size=n_active, replace=False)] = 1
    labels = labels.reshape(h, w)
    targets = np.zeros((h, w, N_REGRESSION))
    targets[labels == 1] = cfg.target_scale * rng.standard_normal((n_active, N_REGRESSION))
    scene = Scene(targets, labels)

    logits = cfg.logit_amp * (2.0 * labels.astype(np.float64) - 1.0)
    data = head.adjoint(targets, logits)
    data = data + cfg.feature_noise * rng.standard_normal((cfg.channels, h, w))
    return scene, FeatureTensor(data)


def smooth_l1(e: np.ndarray) -> np.ndarray:
    """Elementwise smooth-L1: quadratic inside |e| < 1, linear outside."""
    e = np.asarray(e, dtype=np.float64)
    a = np.abs(e)
    return np.where(a < 1.0, 0.5 * e * e, a - 0.5)


def focal_loss(p: np.ndarray, label: np.ndarray) -> np.ndarray:
    """Elementwise focal loss on probabilities with the module's gamma/alpha."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    label = np.asarray(label)
    pos = -FOCAL_ALPHA * (1.0 - p) ** FOCAL_GAMMA * np.log(p)
    neg = -(1.0 - FOCAL_ALPHA) * p**FOCAL_GAMMA * np.log(1.0 - p)
    return np.where(label == 1, pos, neg)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def perception_loss(f: FeatureTensor, scene: Scene, head: ProxyHead) -> float:
    """Localization loss on active cells plus focal occupancy loss on all cells.

    Localization is the smooth-L1 sum over the 4 regression dims, averaged over
    active cells; occupancy is the focal loss averaged over every cell.
    """
    reg, logits = head.readout(f)
    active = scene.labels == 1
    n_active = int(active.sum())
    if n_active > 0:
        l_local = float(smooth_l1(reg[active] - scene.targets[active]).sum()) / n_active
    else:
        l_local = 0.0
    p = _sigmoid(logits)
    l_conf = float(focal_loss(p, scene.labels).sum()) / scene.labels.size
    return l_local + l_conf


def perception_loss_grad(f: FeatureTensor, scene: Scene, head: ProxyHead):
    """Loss and its gradient with respect to the feature tensor entries."""
    reg, logits = head.readout(f)
    active = scene.labels == 1
    n_active = int(active.sum())

    d_reg = np.zeros_like(reg)
    l_local = 0.0
    if n_active > 0:
        e = reg[active] - scene.targets[active]
        l_local = float(smooth_l1(e).sum()) / n_active
        d_reg[active] = np.clip(e, -1.0, 1.0) / n_active

    p = _sigmoid(logits)
    pc = np.clip(p, 1e-12, 1.0 - 1e-12)
    l_conf = float(focal_loss(p, scene.labels).sum()) / scene.labels.size
    # d focal / d logit, derived from p = sigmoid(logit)
    pos = FOCAL_ALPHA * (1.0 - pc) ** FOCAL_GAMMA * (FOCAL_GAMMA * pc * np.log(pc) - (1.0 - pc))
    neg = (1.0 - FOCAL_ALPHA) * pc**FOCAL_GAMMA * (pc - FOCAL_GAMMA * (1.0 - pc) * np.log(1.0 - pc))
    d_logit = np.where(scene.labels == 1, pos, neg) / scene.labels.size

    grad = head.adjoint(d_reg, d_logit)
    return l_local + l_conf, grad


def confidence_map(f: FeatureTensor, head: ProxyHead) -> ConfidenceMap:
    """Sigmoid of the per-cell class logits."""
    _, logits = head.readout(f)
    return ConfidenceMap(_sigmoid(logits))


def true_similarity(
    f_ref: FeatureTensor,
    f_hat: FeatureTensor,
    scene: Scene,
    head: ProxyHead,
    cap: float = SIMILARITY_CAP,
) -> float:
    """Semantic similarity: capped negative log10 of the perception-loss gap.

    Equal losses saturate at the cap; a loss gap of 10^-k scores k.
    """
    gap = abs(perception_loss(f_ref, scene, head) - perception_loss(f_hat, scene, head))
    if gap == 0.0:
        return float(cap)
    return float(min(cap, -math.log10(gap)))
