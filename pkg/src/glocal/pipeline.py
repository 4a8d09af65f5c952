"""End-to-end forward pass for pose transfer and texture inpainting."""

from __future__ import annotations

import os
import warnings
from contextlib import contextmanager

import numpy as np

from ._backend import kernels
from .config import PipelineConfig
from .errors import GlocalError, ShapeError, StageError
from .graph import SubsetWeights, build_body_graph, graph_reason, merge_styles
from .io import load_tensor, save_tensor
from .local import ModulationField, loc_conv, predict_modulation, self_correlation
from .networks import ConvStack
from .region import StyleCodeMatrix, modulate, occlusion_mask, region_avg_pool, style_conv
from .scene import Scene
from .tensor import SegmentationMap, as_tensor, binary_map, check_finite, feature_map
from .transport import cost_matrix, sinkhorn, warp_modulation

STAGES = (
    "F_s", "F_t", "F_w", "F_I", "ST", "m_oc", "graph", "ST_oc", "cond",
    "gamma", "beta", "F_o", "F_c", "field", "cost", "TP", "field_hat", "F_g", "I_g",
)


def warp_source(F_s, flow) -> np.ndarray:
    """Bilinearly sample ``F_s`` at ``p + flow(p)``; off-frame taps read zero.

    ``flow`` is 2 x H x W with the row offset first.
    """
    F_s = feature_map(F_s, "F_s")
    flow = as_tensor(flow, "flow")
    if flow.shape != (2,) + F_s.shape[1:]:
        raise ShapeError(f"flow {flow.shape} does not match features {F_s.shape}")
    out = kernels.bilinear_warp(F_s.astype(np.float64), np.ascontiguousarray(flow, dtype=np.float64))
    return out.astype(np.float32)


class Model:
    """The fixed seeded networks around the operators.

    Encoders, gamma/beta heads, style/graph weights, correlation projections
    and the decoder are drawn from ``cfg.network_seed``; ``cfg.weights_dir``
    replaces any of them with GLT1 files written by :meth:`save`.
    """

    def __init__(self, cfg: PipelineConfig):
        C, N = cfg.channels, cfg.regions
        k = cfg.local.k
        D = (2 * cfg.local.d + 1) ** 2
        rng = np.random.default_rng(cfg.network_seed)
        self.source_encoder = ConvStack.seeded(
            [(3, C, 1, 1, "leaky_relu"), (C, C, 1, 1, "tanh")], int(rng.integers(2**31))
        )
        self.pose_encoder = ConvStack.seeded([(N, C, 3, 1, "tanh")], int(rng.integers(2**31)))
        self.decoder = ConvStack.seeded(
            [(C, C, 3, 1, "leaky_relu"), (C, 3, 3, 1, "sigmoid")], int(rng.integers(2**31))
        )
        scale = 1.0 / np.sqrt(C)
        self.params = {
            "style_w": rng.normal(0, scale, (C, C)),
            "style_b": rng.normal(0, 0.05, C),
            "gamma_w": rng.normal(0, 0.3 * scale, (C, C)),
            "gamma_b": rng.normal(0, 0.05, C),
            "beta_w": rng.normal(0, 0.3 * scale, (C, C)),
            "beta_b": rng.normal(0, 0.05, C),
            "proj_f": rng.normal(0, 1.0 / (k * np.sqrt(D)), (C * k * k, D)),
            "proj_b": rng.normal(0, 0.1 / np.sqrt(D), (C, D)),
        }
        self.graph_weights = SubsetWeights.seeded(C, int(rng.integers(2**31)))
        self.params = {name: v.astype(np.float32) for name, v in self.params.items()}
        if cfg.weights_dir:
            self.load(cfg.weights_dir)

    def _arrays(self):
        out = dict(self.params)
        out.update(graph_w0=self.graph_weights.w0, graph_w1=self.graph_weights.w1, graph_w2=self.graph_weights.w2)
        return out

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, arr in self._arrays().items():
            save_tensor(os.path.join(directory, f"{name}.glt"), arr)
        self.source_encoder.save(directory, "source_encoder")
        self.pose_encoder.save(directory, "pose_encoder")
        self.decoder.save(directory, "decoder")

    def load(self, directory) -> None:
        """Load every file present in ``directory``; missing files keep seeded values."""
        arrays = self._arrays()
        for name, current in arrays.items():
            path = os.path.join(directory, f"{name}.glt")
            if os.path.exists(path):
                arr = load_tensor(path)
                if arr.shape != current.shape:
                    raise ShapeError(f"{path}: shape {arr.shape}, expected {current.shape}")
                arrays[name] = arr
        self.graph_weights = SubsetWeights(arrays.pop("graph_w0"), arrays.pop("graph_w1"), arrays.pop("graph_w2"))
        self.params = {name: arrays[name] for name in self.params}
        for prefix in ("source_encoder", "pose_encoder", "decoder"):
            if os.path.exists(os.path.join(directory, f"{prefix}.0.weight.glt")):
                getattr(self, prefix).load(directory, prefix)

    def heads(self, cond):
        """Per-position affine maps from the conditioning map to (gamma, beta)."""
        p = self.params
        x = cond.reshape(cond.shape[0], -1).astype(np.float64)
        gamma = 1.0 + p["gamma_w"].astype(np.float64) @ x + p["gamma_b"][:, None]
        beta = p["beta_w"].astype(np.float64) @ x + p["beta_b"][:, None]
        return gamma.reshape(cond.shape).astype(np.float32), beta.reshape(cond.shape).astype(np.float32)


class _Recorder:
    def __init__(self):
        self.out = {}

    @contextmanager
    def stage(self, name):
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    def keep(self, name, value):
        with self.stage(name):
            if isinstance(value, np.ndarray) and value.dtype.kind == "f":
                check_finite(value, name)
        self.out[name] = value
        return value


def _pool_matrix(n_in, n_out):
    M = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        M[i, lo:hi] = 1.0 / (hi - lo)
    return M


def _upsample_matrix(n_out, n_in):
    """Bilinear resize weights (half-pixel centers, edge clamped)."""
    M = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = min(max((i + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        M[i, lo] += 1.0 - t
        M[i, hi] += t
    return M


def _resample(x, My, Mx):
    """Apply separable resampling to the two spatial axes of ``x`` (..., H, W)."""
    return My @ np.asarray(x, dtype=np.float64) @ Mx.T


def transport_grid(H: int, W: int, max_grid=(16, 12)) -> tuple[int, int]:
    """Grid on which transport is solved: full resolution up to 256 positions."""
    if H * W <= 256:
        return H, W
    return min(H, int(max_grid[0])), min(W, int(max_grid[1]))


def _align_field(F_s, F_o, field: ModulationField, cfg: PipelineConfig, rec: _Recorder):
    C, H, W = F_o.shape
    ot = cfg.ot
    gh, gw = transport_grid(H, W, ot.max_grid)
    pooled = (gh, gw) != (H, W)
    if pooled:
        Py, Px = _pool_matrix(H, gh), _pool_matrix(W, gw)
        src = _resample(F_s, Py, Px).astype(np.float32)
        gen = _resample(F_o, Py, Px).astype(np.float32)
        taps = np.moveaxis(_resample(np.moveaxis(field.taps, (0, 1), (-2, -1)), Py, Px), (-2, -1), (0, 1))
        bias = np.moveaxis(_resample(np.moveaxis(field.bias, (0, 1), (-2, -1)), Py, Px), (-2, -1), (0, 1))
        coarse = ModulationField(taps, bias, field.k)
    else:
        src, gen, coarse = F_s, F_o, field
    with rec.stage("cost"):
        cost = rec.keep("cost", cost_matrix(src, gen, ot.epsilon_norm))
    with rec.stage("TP"):
        plan = sinkhorn(cost, eps_reg=ot.eps_reg, tau=ot.tau, max_iters=ot.max_iters, tol=ot.tol, mode=ot.mode)
        rec.keep("TP", plan)
    with rec.stage("field_hat"):
        # plan rows index source positions; warping needs rows indexed by target
        warped = warp_modulation(plan.transposed(), coarse, normalize_rows=ot.normalize_rows)
        if pooled:
            Uy, Ux = _upsample_matrix(H, gh), _upsample_matrix(W, gw)
            taps = np.moveaxis(_resample(np.moveaxis(warped.taps, (0, 1), (-2, -1)), Uy, Ux), (-2, -1), (0, 1))
            bias = np.moveaxis(_resample(np.moveaxis(warped.bias, (0, 1), (-2, -1)), Uy, Ux), (-2, -1), (0, 1))
            warped = ModulationField(taps, bias, field.k)
        rec.keep("field_hat", warped)
    return warped


def run_pose_transfer(scene: Scene, cfg: PipelineConfig, model: Model | None = None):
    """Generate the target-posed image.

    Returns ``(I_g, intermediates)`` where ``intermediates`` maps every name
    in :data:`STAGES` to its value.  Failures are re-raised as
    :class:`StageError` tagged with the stage name.
    """
    model = model or Model(cfg)
    lc = cfg.local
    rec = _Recorder()
    if scene.shape != (cfg.height, cfg.width) or scene.S_s.n_regions != cfg.regions:
        raise StageError("input", ShapeError(f"scene {scene.shape} does not match config"))

    with rec.stage("F_s"):
        F_s = rec.keep("F_s", model.source_encoder(scene.I_s).astype(np.float32))
    with rec.stage("F_t"):
        F_t = rec.keep("F_t", model.pose_encoder(scene.S_g.one_hot()).astype(np.float32))
    with rec.stage("F_w"):
        F_w = rec.keep("F_w", warp_source(F_s, scene.flow))
    with rec.stage("F_I"):
        F_I = rec.keep("F_I", F_t + F_w)
    with rec.stage("ST"):
        p = model.params
        ST = rec.keep("ST", style_conv(region_avg_pool(F_s, scene.S_s), p["style_w"], p["style_b"]))
    with rec.stage("m_oc"):
        m_oc = rec.keep("m_oc", occlusion_mask(scene.S_g, scene.m_vis, cfg.foreground_labels))
    with rec.stage("graph"):
        g = rec.keep("graph", build_body_graph(scene.S_g, cfg.edges))
    with rec.stage("ST_oc"):
        ST_oc = rec.keep("ST_oc", graph_reason(ST, g, model.graph_weights))
    with rec.stage("cond"):
        cond = rec.keep("cond", merge_styles(ST, ST_oc, m_oc, scene.S_g))
    with rec.stage("gamma"):
        gamma, beta = model.heads(cond)
        rec.keep("gamma", gamma)
        rec.keep("beta", beta)
    with rec.stage("F_o"):
        F_o = rec.keep("F_o", modulate(F_I, gamma, beta, lc.epsilon))
    with rec.stage("F_c"):
        F_c = rec.keep("F_c", self_correlation(F_s, lc.r, lc.d, lc.normalize_correlation))
    with rec.stage("field"):
        field = rec.keep("field", predict_modulation(F_c, p["proj_f"], p["proj_b"], lc.k))
    field_hat = _align_field(F_s, F_o, field, cfg, rec)
    with rec.stage("F_g"):
        F_g = rec.keep("F_g", loc_conv(F_o, field_hat, lc.epsilon, lc.bias_per_tap))
    with rec.stage("I_g"):
        I_g = rec.keep("I_g", model.decoder(F_g).astype(np.float32))
    return I_g, rec.out


def semantic_mask(seg: SegmentationMap, labels) -> np.ndarray:
    return np.isin(seg.labels, list(labels)).astype(np.uint8)


def run_inpainting(image, seg: SegmentationMap, mask, cfg: PipelineConfig, model: Model | None = None):
    """Fill the masked pixels of ``image`` from region styles.

    Styles are pooled over unmasked pixels only; masked pixels are treated
    as occluded and receive graph-reasoned styles.  Unmasked output pixels
    are copied from the input.  A region that is entirely masked and has no
    surviving neighbour is filled with the mean of the surviving style rows
    (a warning is emitted).  Returns ``(output, intermediates)``.
    """
    model = model or Model(cfg)
    lc = cfg.local
    rec = _Recorder()
    with rec.stage("input"):
        image = feature_map(image, "image")
        if image.shape[0] != 3:
            raise ShapeError(f"expected a 3 x H x W image, got {image.shape}")
        m = binary_map(mask, "mask")
        if m.shape != image.shape[1:] or seg.shape != image.shape[1:]:
            raise ShapeError(f"image {image.shape}, segmentation {seg.shape} and mask {m.shape} disagree")
        if seg.n_regions != cfg.regions:
            raise ShapeError(f"segmentation has {seg.n_regions} regions, config expects {cfg.regions}")
        valid = 1 - m
    p = model.params
    with rec.stage("F_s"):
        F = rec.keep("F_s", model.source_encoder(image * valid).astype(np.float32))
    with rec.stage("ST"):
        raw = rec.keep("ST_raw", region_avg_pool(F, seg, valid=valid))
        ST = rec.keep("ST", style_conv(raw, p["style_w"], p["style_b"]))
    rec.keep("m_oc", m)
    with rec.stage("graph"):
        g = rec.keep("graph", build_body_graph(seg, cfg.edges))
    with rec.stage("ST_oc"):
        ST_oc = graph_reason(ST, g, model.graph_weights)
        in_image = np.bincount(seg.labels.ravel(), minlength=seg.n_regions) > 0
        orphans = in_image & ~ST.presence & ~ST_oc.presence
        if orphans.any():
            if not ST.presence.any():
                raise GlocalError("mask removes every region; nothing to propagate")
            warnings.warn(
                f"regions {np.flatnonzero(orphans).tolist()} are fully masked with no surviving "
                "neighbour; filled with the mean surviving style",
                RuntimeWarning,
                stacklevel=2,
            )
            codes = ST_oc.codes.copy()
            codes[orphans] = ST.codes[ST.presence].astype(np.float64).mean(axis=0)
            ST_oc = StyleCodeMatrix(codes, ST_oc.presence | orphans)
        rec.keep("ST_oc", ST_oc)
        rec.keep("orphans", orphans)
    with rec.stage("cond"):
        cond = rec.keep("cond", merge_styles(ST, ST_oc, m, seg))
    with rec.stage("F_I"):
        F_I = rec.keep("F_I", (model.pose_encoder(seg.one_hot()) + F).astype(np.float32))
    with rec.stage("gamma"):
        gamma, beta = model.heads(cond)
        rec.keep("gamma", gamma)
        rec.keep("beta", beta)
    with rec.stage("F_o"):
        F_o = rec.keep("F_o", modulate(F_I, gamma, beta, lc.epsilon))
    with rec.stage("F_c"):
        F_c = rec.keep("F_c", self_correlation(F, lc.r, lc.d, lc.normalize_correlation))
    with rec.stage("field"):
        field = rec.keep("field", predict_modulation(F_c, p["proj_f"], p["proj_b"], lc.k))
    with rec.stage("F_g"):
        F_g = rec.keep("F_g", loc_conv(F_o, field, lc.epsilon, lc.bias_per_tap))
    with rec.stage("I_g"):
        I_g = rec.keep("I_g", model.decoder(F_g).astype(np.float32))
    out = np.where(m[None] == 1, I_g, image).astype(np.float32)
    rec.out["output"] = out
    return out, rec.out
