"""Local structure: patch self-correlation, predicted filters and LocConv."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ShapeError
from .tensor import DEFAULT_EPS, _normalize64, check_finite, feature_map


@dataclass(frozen=True)
class LocalCorrelationMap:
    """Correlations with the ``(2d+1)**2`` neighbouring patches of each position."""

    values: np.ndarray
    r: int
    d: int

    def __post_init__(self):
        side = 2 * self.d + 1
        if self.values.ndim != 3 or self.values.shape[0] != side * side:
            raise ShapeError(f"expected {side * side} x H x W correlations, got {self.values.shape}")

    def offset_channel(self, dy: int, dx: int) -> int:
        side = 2 * self.d + 1
        return (dy + self.d) * side + (dx + self.d)

    @property
    def center(self) -> np.ndarray:
        return self.values[self.offset_channel(0, 0)]


@dataclass(frozen=True)
class ModulationField:
    """Per-position, per-channel ``k*k`` filter taps and bias.

    ``taps`` is H x W x C x k*k (taps row-major over the window), ``bias`` is
    H x W x C.
    """

    taps: np.ndarray
    bias: np.ndarray
    k: int

    def __post_init__(self):
        taps = np.ascontiguousarray(self.taps, dtype=np.float32)
        bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.k}")
        if taps.ndim != 4 or taps.shape[3] != self.k * self.k:
            raise ShapeError(f"taps must be H x W x C x {self.k * self.k}, got {taps.shape}")
        if bias.shape != taps.shape[:3]:
            raise ShapeError(f"bias {bias.shape} does not match taps {taps.shape}")
        check_finite(taps, "filter taps")
        check_finite(bias, "bias field")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "bias", bias)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.taps.shape[:3]


def self_correlation(F_s, r: int = 1, d: int = 2, normalize: bool = True) -> LocalCorrelationMap:
    """Correlate each local patch of ``F_s`` with its shifted neighbours.

    Channel ``(dy + d) * (2d + 1) + (dx + d)`` holds, at position ``i``, the
    sum over patch offsets ``p`` in ``[-r, r]^2`` of ``<F(i + p), F(i + o + p)>``
    with ``o = (dy, dx)`` and zeros outside the image.  With ``normalize``
    the sums are divided by the patch element count ``(2r+1)**2 * C``.
    """
    if r < 0 or d < 0:
        raise ValueError("r and d must be non-negative")
    F = feature_map(F_s, "F_s")
    raw = kernels.self_correlation(np.ascontiguousarray(F, dtype=np.float64), int(r), int(d))
    if normalize:
        raw = raw / ((2 * r + 1) ** 2 * F.shape[0])
    return LocalCorrelationMap(raw.astype(np.float32), int(r), int(d))


def predict_modulation(F_c: LocalCorrelationMap, P_f, P_b, k: int = 3) -> ModulationField:
    """Point-wise projections of the correlation stack to taps and bias.

    ``P_f`` is ``(C*k*k) x (2d+1)**2`` and ``P_b`` is ``C x (2d+1)**2``.
    """
    D, H, W = F_c.values.shape
    P_f = np.asarray(P_f, dtype=np.float64)
    P_b = np.asarray(P_b, dtype=np.float64)
    if P_f.ndim != 2 or P_f.shape[1] != D or P_f.shape[0] % (k * k):
        raise ShapeError(f"P_f {P_f.shape} cannot map {D} correlations to C*{k * k} taps")
    C = P_f.shape[0] // (k * k)
    if P_b.shape != (C, D):
        raise ShapeError(f"P_b must be {(C, D)}, got {P_b.shape}")
    x = F_c.values.reshape(D, H * W).astype(np.float64)
    taps = (P_f @ x).T.reshape(H, W, C, k * k)
    bias = (P_b @ x).T.reshape(H, W, C)
    return ModulationField(taps, bias, k)


def loc_conv(F_o, field: ModulationField, epsilon: float = DEFAULT_EPS, bias_per_tap: bool = False) -> np.ndarray:
    """Spatially and channel varying ``k x k`` convolution of normalized ``F_o``.

    The window is zero padded.  The bias is added once per output position,
    or ``k*k`` times with ``bias_per_tap``, matching a sum of the bias over
    every window term.
    """
    F_o = feature_map(F_o, "F_o")
    C, H, W = F_o.shape
    if field.shape != (H, W, C):
        raise ShapeError(f"field {field.shape} does not match F_o (H, W, C) = {(H, W, C)}")
    xn, _, _ = _normalize64(F_o, epsilon)
    k = field.k
    scale = float(k * k) if bias_per_tap else 1.0
    out = kernels.loc_conv(
        np.ascontiguousarray(xn),
        field.taps.astype(np.float64),
        field.bias.astype(np.float64),
        k,
        scale,
    )
    return out.astype(np.float32)
