"""Dense tensor helpers and the label/binary map types.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 with rank 1-4
(feature maps are channels x height x width, row-major).  Reductions run in
float64 and are rounded back to float32 on return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError

DEFAULT_EPS = 1e-5


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Validate ``x`` as a tensor and return it as a C-contiguous float32 array."""
    arr = np.asarray(x)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"{name}: rank must be 1..4, got {arr.ndim}")
    if not np.issubdtype(arr.dtype, np.number):
        raise ShapeError(f"{name}: expected a real array, got dtype {arr.dtype}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{name}: {bad} non-finite value(s)")


def feature_map(x, name: str = "feature map") -> np.ndarray:
    arr = as_tensor(x, name)
    if arr.ndim != 3:
        raise ShapeError(f"{name}: expected C x H x W, got shape {arr.shape}")
    return arr


def _normalize64(F: np.ndarray, epsilon: float):
    x = F.astype(np.float64)
    mu = x.mean(axis=(1, 2))
    sigma = np.sqrt(((x - mu[:, None, None]) ** 2).mean(axis=(1, 2)))
    denom = sigma + epsilon
    centered = x - mu[:, None, None]
    # denom can only be zero with epsilon == 0 on a constant channel, where the
    # numerator is zero as well
    safe = np.where(denom > 0, denom, 1.0)
    return centered / safe[:, None, None], mu, sigma


def channel_normalize(F, epsilon: float = DEFAULT_EPS):
    """Normalize each channel to zero mean and unit (population) deviation.

    Returns
    -------
    out : ndarray, float32, C x H x W
        ``(F - mu) / (sigma + epsilon)`` per channel.
    mu, sigma : ndarray, float32, (C,)
        Spatial mean and population standard deviation of each channel.
    """
    F = feature_map(F, "channel_normalize input")
    if F.shape[1] * F.shape[2] < 1:
        raise ShapeError("channel_normalize: empty spatial extent")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    out, mu, sigma = _normalize64(F, epsilon)
    return out.astype(np.float32), mu.astype(np.float32), sigma.astype(np.float32)


@dataclass(frozen=True)
class SegmentationMap:
    """Per-pixel region labels in ``[0, n_regions)``."""

    labels: np.ndarray
    n_regions: int = 8

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ShapeError(f"segmentation must be H x W, got shape {labels.shape}")
        if self.n_regions < 1:
            raise ValueError("n_regions must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_regions):
            raise ValueError(
                f"labels must lie in [0, {self.n_regions}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def one_hot(self) -> np.ndarray:
        """N x H x W float32 indicator stack."""
        eye = np.eye(self.n_regions, dtype=np.float32)
        return np.ascontiguousarray(np.moveaxis(eye[self.labels], -1, 0))


def binary_map(x, name: str = "binary map") -> np.ndarray:
    """Return ``x`` as an H x W uint8 array, checking values are exactly 0 or 1.

    Used for visibility maps (1 = no visible source correspondence) and
    occlusion masks (1 = occluded).
    """
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected H x W, got shape {arr.shape}")
    if arr.dtype == bool:
        return np.ascontiguousarray(arr, dtype=np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name}: values must be exactly 0 or 1")
    return np.ascontiguousarray(arr, dtype=np.uint8)


def require_same_hw(*items) -> tuple[int, int]:
    """Check that all ``(name, HxW shape)`` pairs agree and return the shape."""
    shapes = {name: tuple(shape[-2:]) for name, shape in items}
    distinct = set(shapes.values())
    if len(distinct) != 1:
        raise ShapeError(f"spatial extents differ: {shapes}")
    return distinct.pop()
