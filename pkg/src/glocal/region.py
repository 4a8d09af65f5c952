"""Per-region style codes, occlusion masks, style broadcast and modulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import (
    DEFAULT_EPS,
    SegmentationMap,
    _normalize64,
    binary_map,
    check_finite,
    feature_map,
    require_same_hw,
)


@dataclass(frozen=True)
class StyleCodeMatrix:
    """N x C style vectors plus a presence flag per region.

    Absent regions (no source pixels) always carry an all-zero row.
    """

    codes: np.ndarray
    presence: np.ndarray

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.float32)
        presence = np.ascontiguousarray(self.presence, dtype=bool)
        if codes.ndim != 2 or presence.shape != (codes.shape[0],):
            raise ShapeError(f"codes {codes.shape} / presence {presence.shape} mismatch")
        check_finite(codes, "style codes")
        if np.any(codes[~presence] != 0):
            raise ValueError("absent regions must have zero style rows")
        codes.flags.writeable = False
        presence.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "presence", presence)

    @property
    def n_regions(self) -> int:
        return self.codes.shape[0]

    @property
    def channels(self) -> int:
        return self.codes.shape[1]

    @classmethod
    def full(cls, codes) -> "StyleCodeMatrix":
        """All regions marked present."""
        codes = np.asarray(codes)
        return cls(codes, np.ones(codes.shape[0], dtype=bool))


def region_avg_pool(F, S: SegmentationMap, valid=None) -> StyleCodeMatrix:
    """Average ``F`` over the pixels of each region.

    ``valid`` optionally restricts pooling to pixels where it is nonzero; a
    region with no valid pixel gets a zero row and ``presence=False``.
    """
    F = feature_map(F)
    require_same_hw(("features", F.shape), ("segmentation", S.shape))
    labels = S.labels.ravel()
    x = F.reshape(F.shape[0], -1).astype(np.float64)
    if valid is not None:
        keep = binary_map(valid, "valid mask").ravel().astype(bool)
        require_same_hw(("features", F.shape), ("valid mask", np.shape(valid)))
        labels = labels[keep]
        x = x[:, keep]
    N = S.n_regions
    counts = np.bincount(labels, minlength=N)
    sums = np.zeros((N, F.shape[0]))
    # np.add.at accumulates in pixel order, giving a fixed reduction order
    np.add.at(sums, labels, x.T)
    presence = counts > 0
    codes = np.zeros_like(sums)
    codes[presence] = sums[presence] / counts[presence, None]
    return StyleCodeMatrix(codes, presence)


def foreground_mask(S: SegmentationMap, foreground_labels=None) -> np.ndarray:
    if foreground_labels is None:
        foreground_labels = range(1, S.n_regions)
    return np.isin(S.labels, list(foreground_labels))


def occlusion_mask(S_g: SegmentationMap, m_vis, foreground_labels=None) -> np.ndarray:
    """Pixels that belong to a foreground region of ``S_g`` but are invisible.

    ``foreground_labels`` defaults to every label except 0 (background).
    """
    vis = binary_map(m_vis, "visibility map")
    require_same_hw(("segmentation", S_g.shape), ("visibility map", vis.shape))
    return (foreground_mask(S_g, foreground_labels) & (vis == 1)).astype(np.uint8)


def broadcast_styles(ST: StyleCodeMatrix, S: SegmentationMap) -> np.ndarray:
    """Paint every pixel with its region's style vector (C x H x W)."""
    if S.labels.size and S.labels.max() >= ST.n_regions:
        raise ValueError(f"label {S.labels.max()} has no style row (N={ST.n_regions})")
    return np.ascontiguousarray(np.moveaxis(ST.codes[S.labels], -1, 0))


def style_conv(ST: StyleCodeMatrix, W_style, b_style) -> StyleCodeMatrix:
    """1x1 convolution over style vectors; absent regions stay zero."""
    W_style = np.asarray(W_style, dtype=np.float64)
    b_style = np.asarray(b_style, dtype=np.float64)
    if W_style.ndim != 2 or W_style.shape[1] != ST.channels:
        raise ShapeError(f"weight {W_style.shape} incompatible with {ST.channels} channels")
    if b_style.shape != (W_style.shape[0],):
        raise ShapeError(f"bias {b_style.shape} incompatible with weight {W_style.shape}")
    out = ST.codes.astype(np.float64) @ W_style.T + b_style
    out[~ST.presence] = 0.0
    return StyleCodeMatrix(out, ST.presence)


def modulate(F_I, gamma, beta, epsilon: float = DEFAULT_EPS) -> np.ndarray:
    """Spatially varying affine modulation of the channel-normalized ``F_I``."""
    F_I = feature_map(F_I, "F_I")
    gamma = feature_map(gamma, "gamma")
    beta = feature_map(beta, "beta")
    if not F_I.shape == gamma.shape == beta.shape:
        raise ShapeError(f"shapes differ: F_I {F_I.shape}, gamma {gamma.shape}, beta {beta.shape}")
    xn, _, _ = _normalize64(F_I, epsilon)
    out = gamma.astype(np.float64) * xn + beta.astype(np.float64)
    return out.astype(np.float32)
