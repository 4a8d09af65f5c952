"""Command line entry point: ``glocal <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import PipelineConfig
from .errors import GlocalError
from .graph import BodyGraph
from .io import read_pgm, read_ppm, save_tensor, write_pgm, write_ppm
from .local import LocalCorrelationMap, ModulationField
from .objectives import l1_loss, multiclass_focal_loss, perceptual_loss, default_extractor
from .pipeline import STAGES, Model, run_inpainting, run_pose_transfer, semantic_mask
from .region import StyleCodeMatrix
from .scene import synth_scene
from .selftest import run_selftest
from .tensor import SegmentationMap
from .transport import TransportPlan


def _load_config(path):
    return PipelineConfig.from_json(path) if path else PipelineConfig()


def _stage_tensors(name, value):
    """Map an intermediate to ``{file_stem: array}`` for GLT1 output."""
    if isinstance(value, StyleCodeMatrix):
        return {name: value.codes, f"{name}.presence": value.presence.astype(np.float32)}
    if isinstance(value, LocalCorrelationMap):
        return {name: value.values}
    if isinstance(value, ModulationField):
        return {f"{name}.taps": value.taps, f"{name}.bias": value.bias}
    if isinstance(value, TransportPlan):
        return {name: value.matrix}
    if isinstance(value, BodyGraph):
        return {f"{name}.anchors": value.anchors, f"{name}.distances": value.distances}
    arr = np.asarray(value, dtype=np.float32)
    return {name: arr if arr.ndim else arr.reshape(1)}


def _scene_summary(scene, inter, I_g, cfg):
    plan = inter["TP"]
    probs = np.clip(scene.S_g.one_hot(), 0.0, 1.0)
    focal, _ = multiclass_focal_loss(probs, scene.S_t, cfg.loss.eta)
    return {
        "seed": scene.seed,
        "shape": list(I_g.shape),
        "occluded_pixels": int(inter["m_oc"].sum()),
        "invisible_pixels": int(scene.m_vis.sum()),
        "transport": {
            "mode": plan.mode,
            "positions": plan.n,
            "iterations": plan.iterations,
            "violation": plan.violation,
            "converged": plan.converged,
        },
        "losses": {
            "l1": l1_loss(I_g, scene.I_t)[0],
            "perceptual": perceptual_loss(I_g, scene.I_t, default_extractor(cfg.perc.seed)),
            "focal_segmentation": focal,
        },
    }


def cmd_pose_transfer(args) -> int:
    cfg = _load_config(args.config)
    scene = synth_scene(cfg, args.seed)
    I_g, inter = run_pose_transfer(scene, cfg)
    os.makedirs(args.out, exist_ok=True)
    maxval = cfg.regions - 1
    write_ppm(os.path.join(args.out, "I_s.ppm"), scene.I_s)
    write_ppm(os.path.join(args.out, "I_t.ppm"), scene.I_t)
    write_ppm(os.path.join(args.out, "I_g.ppm"), I_g)
    write_pgm(os.path.join(args.out, "S_s.pgm"), scene.S_s.labels, maxval)
    write_pgm(os.path.join(args.out, "S_g.pgm"), scene.S_g.labels, maxval)
    write_pgm(os.path.join(args.out, "m_vis.pgm"), scene.m_vis, 1)
    write_pgm(os.path.join(args.out, "m_oc.pgm"), inter["m_oc"], 1)
    save_tensor(os.path.join(args.out, "I_g.glt"), I_g)
    report = _scene_summary(scene, inter, I_g, cfg)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_inpaint(args) -> int:
    cfg = _load_config(args.config)
    image = read_ppm(args.image)
    labels, _ = read_pgm(args.seg)
    seg = SegmentationMap(labels, cfg.regions)
    if args.mask:
        raw, _ = read_pgm(args.mask)
        mask = (raw > 0).astype(np.uint8)
    else:
        chosen = [int(v) for v in args.mask_labels.split(",") if v.strip()]
        mask = semantic_mask(seg, chosen)
    out, _ = run_inpainting(image, seg, mask, cfg)
    write_ppm(args.out, out)
    print(json.dumps({"out": args.out, "masked_pixels": int(mask.sum())}))
    return 0


def cmd_selftest(args) -> int:
    cfg = _load_config(args.config)
    report = run_selftest(cfg)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    print(text)
    return 0 if report["ok"] else 1


def cmd_dump(args) -> int:
    cfg = _load_config(args.config)
    if args.stage not in STAGES + ("all",):
        raise GlocalError(f"unknown stage {args.stage!r}; choose from {', '.join(STAGES)} or all")
    scene = synth_scene(cfg, args.seed)
    _, inter = run_pose_transfer(scene, cfg, Model(cfg))
    names = STAGES if args.stage == "all" else (args.stage,)
    os.makedirs(args.out, exist_ok=True)
    written = []
    for name in names:
        for stem, arr in _stage_tensors(name, inter[name]).items():
            path = os.path.join(args.out, f"{stem}.glt")
            save_tensor(path, arr)
            written.append(path)
    print(json.dumps({"written": written}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glocal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pose-transfer", help="run pose transfer on a synthetic scene")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pose_transfer)

    p = sub.add_parser("inpaint", help="inpaint masked pixels of a PPM image")
    p.add_argument("--image", required=True)
    p.add_argument("--seg", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mask", help="PGM mask, nonzero = masked")
    group.add_argument("--mask-labels", help="comma separated region labels to remove")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("selftest", help="run built-in invariant and gradient checks")
    p.add_argument("--config")
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("dump-intermediates", help="write pipeline intermediates as GLT1 tensors")
    p.add_argument("--stage", required=True, help=f"one of {', '.join(STAGES)} or 'all'")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GlocalError, OSError) as exc:
        print(f"glocal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
