"""Feature tensors, importance masking, and the packed-vector wire format.

A feature tensor is a (C, H, W) array of finite reals. An importance mask
selects the spatial cells worth transmitting; packing gathers the selected
columns into a flat vector and unpacking scatters them back, bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureTensor:
    """Immutable (C, H, W) real-valued feature volume."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"feature tensor must be (C, H, W), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature tensor entries must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ImportanceMask:
    """Binary (H, W) cell-selection mask with its target compression ratio."""

    cells: np.ndarray
    cr: float

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ValueError(f"mask must be (H, W), got shape {cells.shape}")
        if cells.dtype != np.bool_:
            if not np.all((cells == 0) | (cells == 1)):
                raise ValueError("mask entries must be binary")
            cells = cells.astype(bool)
        if not 0.0 < self.cr <= 1.0:
            raise ValueError(f"cr must be in (0, 1], got {self.cr}")
        # occupancy must match the target ratio to within one cell
        n_cells = cells.size
        if abs(int(cells.sum()) - self.cr * n_cells) > 1.0:
            raise ValueError("mask occupancy inconsistent with cr")
        object.__setattr__(self, "cells", _frozen(cells))

    @property
    def n_selected(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class ConfidenceMap:
    """(H, W) map of per-cell detection confidences in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"confidence map must be (H, W), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("confidence map entries must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(values))


def importance_map(f: FeatureTensor, cr: float) -> ImportanceMask:
    """Select the ceil(cr*H*W) cells with the largest channel-wise L2 magnitude.

    Ties are broken toward the lowest row-major linear index.
    """
    if not 0.0 < cr <= 1.0:
        raise ValueError(f"cr must be in (0, 1], got {cr}")
    c, h, w = f.shape
    k = int(np.ceil(cr * h * w))
    mag = np.sqrt(np.sum(f.data * f.data, axis=0)).reshape(-1)
    # stable sort on descending magnitude keeps lowest linear index first on ties
    order = np.argsort(-mag, kind="stable")
    cells = np.zeros(h * w, dtype=bool)
    cells[order[:k]] = True
    return ImportanceMask(cells.reshape(h, w), cr)


def apply_mask(f: FeatureTensor, mask: ImportanceMask) -> FeatureTensor:
    """Zero every channel of the cells not selected by the mask."""
    c, h, w = f.shape
    if mask.cells.shape != (h, w):
        raise ValueError(
            f"mask shape {mask.cells.shape} does not match feature plane ({h}, {w})"
        )
    out = f.data * mask.cells[None, :, :]
    return FeatureTensor(out)


def pack_nonzero(f: FeatureTensor, mask: ImportanceMask) -> np.ndarray:
    """Gather the selected cells into a flat (C * n_selected,) vector.

    Order is channel-major: all selected cells of channel 0 in row-major cell
    order, then channel 1, and so on. With a full mask this equals the
    row-major flatten of the tensor.
    """
    c, h, w = f.shape
    if mask.cells.shape != (h, w):
        raise ValueError(
            f"mask shape {mask.cells.shape} does not match feature plane ({h}, {w})"
        )
    return f.data[:, mask.cells].reshape(-1).copy()


def unpack(v: np.ndarray, mask: ImportanceMask, shape: tuple[int, int, int]) -> FeatureTensor:
    """Scatter a packed vector back into a full-shape tensor (zeros elsewhere)."""
    c, h, w = shape
    if mask.cells.shape != (h, w):
        raise ValueError(
            f"mask shape {mask.cells.shape} does not match feature plane ({h}, {w})"
        )
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    k = mask.n_selected
    if v.size != c * k:
        raise ValueError(f"packed vector has {v.size} entries, expected {c * k}")
    out = np.zeros((c, h, w), dtype=np.float64)
    out[:, mask.cells] = v.reshape(c, k)
    return FeatureTensor(out)


def save_tensor(path, f: FeatureTensor) -> None:
    """Write a tensor as three little-endian uint32 dims followed by float32 data."""
    c, h, w = f.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", c, h, w))
        fh.write(f.data.astype("<f4").tobytes())


def load_tensor(path) -> FeatureTensor:
    """Read a tensor written by save_tensor."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError("truncated tensor file: missing dims header")
        c, h, w = struct.unpack("<III", header)
        raw = fh.read(4 * c * h * w)
        if len(raw) != 4 * c * h * w:
            raise ValueError("truncated tensor file: missing payload")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(c, h, w)
    return FeatureTensor(data)
