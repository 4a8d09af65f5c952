"""Procedural desk-scale scenes: a blobby labelled person in two poses.

Every region is a union of ellipses in a canonical frame.  The source and
target poses place each region by a rigid transform; the dense flow maps
each target pixel to its source position and the visibility map flags
target pixels whose source position is off-frame or covered by another
region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .tensor import SegmentationMap

# (center_row, center_col, radius_rows, radius_cols) in fractions of the frame
_TEMPLATE_8 = {
    1: [(0.10, 0.50, 0.06, 0.16)],
    2: [(0.19, 0.50, 0.07, 0.12)],
    3: [(0.40, 0.50, 0.15, 0.22)],
    4: [(0.60, 0.50, 0.08, 0.20)],
    5: [(0.40, 0.20, 0.15, 0.07), (0.40, 0.80, 0.15, 0.07)],
    6: [(0.78, 0.38, 0.12, 0.08), (0.78, 0.62, 0.12, 0.08)],
    7: [(0.93, 0.36, 0.04, 0.10), (0.93, 0.64, 0.04, 0.10)],
}


def region_template(n_regions: int) -> dict[int, list[tuple[float, float, float, float]]]:
    if n_regions == 8:
        return _TEMPLATE_8
    count = n_regions - 1
    ry = min(0.3, 0.45 / count)
    template = {}
    for i in range(1, n_regions):
        cy = 0.5 if count == 1 else 0.1 + 0.8 * (i - 1) / (count - 1)
        template[i] = [(cy, 0.5, ry, 0.25)]
    return template


@dataclass(frozen=True)
class Scene:
    """Source/target pair with flow (dy, dx per target pixel) and visibility."""

    I_s: np.ndarray
    I_t: np.ndarray
    S_s: SegmentationMap
    S_t: SegmentationMap
    S_g: SegmentationMap
    flow: np.ndarray
    m_vis: np.ndarray
    seed: int

    def __post_init__(self):
        H, W = self.S_s.shape
        for name in ("I_s", "I_t", "flow"):
            arr = getattr(self, name)
            if arr.shape[1:] != (H, W):
                raise ValueError(f"{name} extent {arr.shape[1:]} differs from {(H, W)}")
        if self.S_t.shape != (H, W) or self.S_g.shape != (H, W) or self.m_vis.shape != (H, W):
            raise ValueError("segmentation/visibility extents differ")
        if np.abs(self.flow).max(initial=0.0) >= max(H, W):
            raise ValueError("flow magnitude must stay below max(H, W)")

    @property
    def shape(self) -> tuple[int, int]:
        return self.S_s.shape


@dataclass(frozen=True)
class _Pose:
    angle: float
    shift: tuple[float, float]
    pivot: tuple[float, float]

    def inverse(self, ys, xs):
        """Canonical coordinates of image points ``(ys, xs)``."""
        cy, cx = self.pivot
        py = ys - cy - self.shift[0]
        px = xs - cx - self.shift[1]
        c, s = np.cos(self.angle), np.sin(self.angle)
        return c * py + s * px + cy, -s * py + c * px + cx

    def forward(self, qy, qx):
        cy, cx = self.pivot
        c, s = np.cos(self.angle), np.sin(self.angle)
        dy, dx = qy - cy, qx - cx
        return c * dy - s * dx + cy + self.shift[0], s * dy + c * dx + cx + self.shift[1]


def _inside(shapes, qy, qx, H, W):
    hit = np.zeros(qy.shape, dtype=bool)
    for cy, cx, ry, rx in shapes:
        hit |= ((qy - cy * (H - 1)) / (ry * H)) ** 2 + ((qx - cx * (W - 1)) / (rx * W)) ** 2 <= 1.0
    return hit


def _rasterize(template, poses, H, W):
    ys, xs = np.indices((H, W), dtype=np.float64)
    labels = np.zeros((H, W), dtype=np.int32)
    qy, qx = ys.copy(), xs.copy()
    for n, shapes in template.items():
        cy, cx = poses[n].inverse(ys, xs)
        hit = _inside(shapes, cy, cx, H, W)
        labels[hit] = n
        qy[hit] = cy[hit]
        qx[hit] = cx[hit]
    return labels, qy, qx


def _textures(rng, n_regions, amplitude):
    colors = rng.uniform(0.15, 0.85, (n_regions, 3))
    freqs = rng.uniform(0.3, 1.2, (n_regions, 3))
    angles = rng.uniform(0.0, np.pi, (n_regions, 3))
    phases = rng.uniform(0.0, 2 * np.pi, (n_regions, 3, 3))
    return colors, freqs, angles, phases, amplitude


def _paint(labels, qy, qx, tex):
    colors, freqs, angles, phases, amplitude = tex
    H, W = labels.shape
    img = np.empty((3, H, W))
    base = colors[labels]  # H x W x 3
    wave = np.zeros((H, W, 3))
    for m in range(3):
        f = freqs[labels, m]
        a = angles[labels, m]
        arg = f * (np.cos(a) * qy + np.sin(a) * qx)
        wave += np.sin(arg[..., None] + phases[labels, m]) / 3.0
    img[:] = np.moveaxis(np.clip(base + amplitude * wave, 0.0, 1.0), -1, 0)
    return img.astype(np.float32)


def _noisy_labels(labels, prob, rng):
    if prob <= 0:
        return labels.copy()
    H, W = labels.shape
    out = labels.copy()
    pad = np.pad(labels, 1, mode="edge")
    neighbors = np.stack([pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]])
    differs = neighbors != labels
    boundary = differs.any(axis=0)
    flip = boundary & (rng.random((H, W)) < prob)
    pick = rng.integers(0, 4, size=(H, W))
    for y, x in zip(*np.nonzero(flip)):
        options = neighbors[differs[:, y, x], y, x]
        out[y, x] = options[pick[y, x] % len(options)]
    return out


def synth_scene(cfg: PipelineConfig, seed: int, source_shifts=None) -> Scene:
    """Generate a deterministic scene.

    ``source_shifts`` optionally maps region labels to a ``(dy, dx)``
    translation applied to that region in the source pose only (e.g. to
    move a region out of the source frame).
    """
    H, W, N = cfg.height, cfg.width, cfg.regions
    sc = cfg.scene
    rng = np.random.default_rng(seed)
    template = region_template(N)
    tex = _textures(rng, N, sc.texture_noise)
    source_shifts = source_shifts or {}

    src_poses = {}
    tgt_poses = {}
    for n, shapes in template.items():
        pivot = (float(np.mean([s[0] for s in shapes]) * (H - 1)), float(np.mean([s[1] for s in shapes]) * (W - 1)))
        angle = rng.uniform(-sc.max_rotation, sc.max_rotation) if sc.max_rotation > 0 else 0.0
        shift = rng.uniform(-sc.max_shift, sc.max_shift, 2) if sc.max_shift > 0 else np.zeros(2)
        tgt_poses[n] = _Pose(float(angle), (float(shift[0]), float(shift[1])), pivot)
        sy, sx = source_shifts.get(n, (0.0, 0.0))
        src_poses[n] = _Pose(0.0, (float(sy), float(sx)), pivot)

    lab_s, qys, qxs = _rasterize(template, src_poses, H, W)
    lab_t, qyt, qxt = _rasterize(template, tgt_poses, H, W)

    ys, xs = np.indices((H, W), dtype=np.float64)
    flow = np.zeros((2, H, W))
    m_vis = np.zeros((H, W), dtype=np.uint8)
    for n in template:
        sel = lab_t == n
        if not sel.any():
            continue
        sy, sx = src_poses[n].forward(qyt[sel], qxt[sel])
        flow[0][sel] = sy - ys[sel]
        flow[1][sel] = sx - xs[sel]
        iy = np.rint(sy).astype(np.int64)
        ix = np.rint(sx).astype(np.int64)
        inside = (iy >= 0) & (iy < H) & (ix >= 0) & (ix < W)
        visible = np.zeros_like(inside)
        visible[inside] = lab_s[iy[inside], ix[inside]] == n
        m_vis[sel] = (~visible).astype(np.uint8)

    I_s = _paint(lab_s, qys, qxs, tex)
    I_t = _paint(lab_t, qyt, qxt, tex)
    lab_g = _noisy_labels(lab_t, sc.noisy_segmentation, rng)
    return Scene(
        I_s=I_s,
        I_t=I_t,
        S_s=SegmentationMap(lab_s, N),
        S_t=SegmentationMap(lab_t, N),
        S_g=SegmentationMap(lab_g, N),
        flow=flow.astype(np.float32),
        m_vis=m_vis,
        seed=int(seed),
    )
