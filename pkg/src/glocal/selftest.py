"""Built-in invariant and gradient checks, reported as stable JSON."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from . import _pykernels
from ._backend import BACKEND, kernels
from .config import PipelineConfig
from .graph import BodyGraph, SubsetWeights, graph_reason, partition_neighbors
from .io import decode_tensor, encode_tensor
from .local import ModulationField, loc_conv, self_correlation
from .objectives import finite_diff_check, focal_loss, l1_loss, perceptual_loss
from .pipeline import Model, run_inpainting, run_pose_transfer
from .region import StyleCodeMatrix, broadcast_styles, occlusion_mask, region_avg_pool
from .scene import synth_scene
from .tensor import SegmentationMap, channel_normalize
from .transport import sinkhorn, warp_modulation

SCHEMA = "glocal.selftest/1"
PASS, WARN, FAIL = "pass", "warn", "fail"


def _check(name, module, ok, value=None, threshold=None, status_if_bad=FAIL):
    return {
        "name": name,
        "module": module,
        "status": PASS if ok else status_if_bad,
        "value": None if value is None else float(value),
        "threshold": None if threshold is None else float(threshold),
    }


def _tensor_checks(rng):
    F = rng.normal(size=(3, 4, 4)).astype(np.float32)
    out, _, _ = channel_normalize(F)
    o = out.astype(np.float64)
    mean_err = np.abs(o.mean(axis=(1, 2))).max()
    std_err = np.abs(o.std(axis=(1, 2)) - 1).max()
    yield _check("channel_normalize.mean", "tensor-core", mean_err <= 1e-6, mean_err, 1e-6)
    yield _check("channel_normalize.std", "tensor-core", std_err <= 1e-4, std_err, 1e-4)
    same = True
    for shape in [(5,), (2, 3), (2, 3, 4), (1, 2, 3, 4)]:
        T = rng.normal(size=shape).astype(np.float32)
        back = decode_tensor(encode_tensor(T))
        same &= back.shape == T.shape and back.tobytes() == T.tobytes()
    yield _check("glt1.roundtrip", "tensor-core", same)


def _region_checks(rng):
    worst = 0.0
    for _ in range(10):
        S = SegmentationMap(rng.integers(0, 4, (6, 5)), 4)
        rows = rng.normal(size=(4, 3))
        F = np.moveaxis(rows[S.labels], -1, 0)
        err = np.abs(broadcast_styles(region_avg_pool(F, S), S) - F).max()
        worst = max(worst, float(err))
    yield _check("pool_broadcast.identity", "region-style", worst <= 1e-6, worst, 1e-6)
    S = SegmentationMap(rng.integers(0, 4, (6, 5)), 4)
    vis = rng.integers(0, 2, (6, 5))
    yield _check("occlusion.subset_of_visibility", "region-style", bool(np.all(occlusion_mask(S, vis) <= vis)))


def _graph_checks(rng):
    C = 4
    g = BodyGraph.from_distances([0.0, 1.0, 2.0, 1.0, 3.0], [(0, 1), (1, 2), (1, 3), (3, 4)])
    w = SubsetWeights(*(rng.normal(size=(C, C)) for _ in range(3)))
    A = StyleCodeMatrix.full(rng.normal(size=(5, C)))
    B = StyleCodeMatrix.full(rng.normal(size=(5, C)))
    lhs = graph_reason(StyleCodeMatrix.full(2.0 * A.codes.astype(np.float64) - 0.5 * B.codes), g, w).codes
    rhs = 2.0 * graph_reason(A, g, w).codes.astype(np.float64) - 0.5 * graph_reason(B, g, w).codes
    err = np.abs(lhs - rhs).max()
    yield _check("graph_reason.linearity", "graph-reasoning", err <= 1e-5, err, 1e-5)
    s = rng.normal(size=C)
    out = graph_reason(StyleCodeMatrix.full(np.tile(s, (5, 1))), g, SubsetWeights.identity(C)).codes
    labels = partition_neighbors(g)
    k = np.array([len(set(labels[i][labels[i] >= 0])) for i in range(5)])
    err = np.abs(out - k[:, None] * s.astype(np.float32)).max()
    yield _check("graph_reason.subset_normalization", "graph-reasoning", err <= 1e-5, err, 1e-5)
    anti = all(
        labels[j, i] == 2 for i in range(5) for j in range(5) if i != j and labels[i, j] == 1
    )
    yield _check("partition.antisymmetry", "graph-reasoning", anti)


def _local_checks(rng):
    F = rng.normal(size=(2, 6, 5)).astype(np.float32)
    Fc = self_correlation(F, 1, 1, normalize=False).values.astype(np.float64)
    H, W = 6, 5
    # squared patch norms on a frame extended by the offset radius
    energy = np.pad((F.astype(np.float64) ** 2).sum(axis=0), 2)
    norms = sum(energy[py : py + H + 2, px : px + W + 2] for py in range(3) for px in range(3))
    worst = -np.inf
    for idx in range(9):
        dy, dx = idx // 3 - 1, idx % 3 - 1
        for y in range(H):
            for x in range(W):
                bound = np.sqrt(norms[y + 1, x + 1] * norms[y + 1 + dy, x + 1 + dx]) + 1e-5
                worst = max(worst, abs(Fc[idx, y, x]) - bound)
    yield _check("self_correlation.cauchy_schwarz", "local-structure", worst <= 0, worst, 0.0)
    # trivially zero when the fallback is the active backend
    ref = _pykernels.self_correlation(F.astype(np.float64), 1, 2)
    err = np.abs(ref - kernels.self_correlation(F.astype(np.float64), 1, 2)).max()
    yield _check("kernels.backend_agreement", "local-structure", err <= 1e-9, err, 1e-9)
    taps = np.ones((6, 5, 2, 1))
    field = ModulationField(taps, np.zeros((6, 5, 2)), 1)
    same = np.array_equal(loc_conv(F, field), channel_normalize(F)[0])
    yield _check("loc_conv.k1_identity", "local-structure", same)


def _transport_checks(rng, cfg):
    ot = cfg.ot
    n = 16
    C = rng.uniform(0, 2, (n, n))
    with warnings.catch_warnings(), _quiet("glocal.transport"):
        warnings.simplefilter("ignore")
        plan = sinkhorn(C, eps_reg=ot.eps_reg, max_iters=ot.max_iters, tol=ot.tol, mode="balanced")
    yield _check(
        "sinkhorn.marginals", "transport", plan.converged and plan.violation < max(ot.tol, 1e-6),
        plan.violation, ot.tol, status_if_bad=WARN,
    )
    yield _check("sinkhorn.nonnegative", "transport", bool(np.all(plan.matrix >= 0)))
    field = ModulationField(np.full((4, 4, 2, 9), 0.7), np.full((4, 4, 2), -0.3), 3)
    P = rng.uniform(0, 1, (16, 16))
    out = warp_modulation(P, field)
    err = max(np.abs(out.taps - 0.7).max(), np.abs(out.bias + 0.3).max())
    yield _check("warp_modulation.convex", "transport", err <= 1e-6, err, 1e-6)


def _objective_checks(rng, cfg):
    p = rng.uniform(0.05, 0.95, (6, 6))
    t = rng.integers(0, 2, (6, 6))
    rep = finite_diff_check(lambda x: focal_loss(x, t, cfg.loss.eta), p, step=1e-4, tol=1e-3)
    yield _check("focal.gradient", "objectives", rep.passed, rep.max_rel_error, 1e-3)
    a = rng.normal(size=(3, 5, 5))
    b = a + rng.choice([-1, 1], a.shape) * rng.uniform(0.01, 1, a.shape)
    rep = finite_diff_check(lambda x: l1_loss(x, b), a, step=1e-5, tol=1e-4)
    yield _check("l1.gradient", "objectives", rep.passed, rep.max_rel_error, 1e-4)
    value, _ = focal_loss(p, t, 0.0)
    pt = np.where(t == 1, p, 1 - p)
    bce = float(np.mean(-np.log(pt)))
    yield _check("focal.eta0_is_bce", "objectives", abs(value - bce) <= 1e-7, abs(value - bce), 1e-7)
    img = rng.uniform(0, 1, (3, 8, 8))
    yield _check("perceptual.identity_zero", "objectives", perceptual_loss(img, img) == 0.0)


def _pipeline_checks(cfg):
    model = Model(cfg)
    scene = synth_scene(cfg, 0)
    with _quiet("glocal.transport"):
        a, inter = run_pose_transfer(scene, cfg, model)
        b, _ = run_pose_transfer(scene, cfg, model)
    yield _check("pose_transfer.deterministic", "pipeline", a.tobytes() == b.tobytes())
    yield _check(
        "pose_transfer.range", "pipeline",
        bool(np.all(np.isfinite(a)) and a.min() >= 0 and a.max() <= 1),
    )
    empty = np.zeros(scene.shape, dtype=np.uint8)
    out, _ = run_inpainting(scene.I_s, scene.S_s, empty, cfg, model)
    yield _check("inpainting.empty_mask_identity", "pipeline", np.array_equal(out, scene.I_s))


class _quiet:
    def __init__(self, name):
        self.logger = logging.getLogger(name)

    def __enter__(self):
        self.level = self.logger.level
        self.logger.setLevel(logging.ERROR)

    def __exit__(self, *exc):
        self.logger.setLevel(self.level)


def run_selftest(cfg: PipelineConfig | None = None, seed: int = 0) -> dict:
    """Run every check; ``report["ok"]`` reflects failures and the warning policy."""
    cfg = cfg or PipelineConfig()
    rng = np.random.default_rng(seed)
    checks = []
    for group in (
        _tensor_checks(rng),
        _region_checks(rng),
        _graph_checks(rng),
        _local_checks(rng),
        _transport_checks(rng, cfg),
        _objective_checks(rng, cfg),
        _pipeline_checks(cfg),
    ):
        checks.extend(group)
    summary = {s: sum(c["status"] == s for c in checks) for s in (PASS, WARN, FAIL)}
    ok = summary[FAIL] == 0 and not (cfg.selftest.warnings_fail and summary[WARN])
    return {"schema": SCHEMA, "backend": BACKEND, "checks": checks, "summary": summary, "ok": ok}
