"""Command-line front end.

    edgevo run [config] [--key value ...]
    edgevo demo [config] [--key value ...]
    edgevo eval-ate GROUNDTRUTH ESTIMATE [--max-dt S]
    edgevo eval-rpe GROUNDTRUTH ESTIMATE [--delta D] [--mode time|frames]
    edgevo edges [config] --frame N [--out-dir DIR]

Every configuration key can be overridden on the command line with
``--key value`` (dashes or underscores). Exit codes: 0 ok, 2 config,
3 dataset, 4 tracking, 5 evaluation.
"""
import argparse
import json
from dataclasses import replace
import logging
import os
import sys

import cv2
import numpy as np

from .config import RunConfig
from .corners import CornerAugmenter
from .dataset_io import (TUMSequence, builtin_intrinsics, load_intrinsics, read_trajectory,
                         write_trajectory)
from .errors import DatasetError, EdgeVOError, IndexOutOfRange, TrackingLost
from .evaluation import ate, rpe
from .odometry import CannyEdges, ExternalEdges, PrecomputedEdges, track_sequence, write_diagnostics
from .synthetic import demo_sequence

log = logging.getLogger("edgevo")


class RunInput:
    """Frames, edge source and (optional) ground truth for one run."""

    def __init__(self, frames, edge_source, groundtruth=None, synthetic=False, count=0):
        self.frames = frames
        self.edge_source = edge_source
        self.groundtruth = groundtruth
        self.synthetic = synthetic
        self.count = count


def resolve_intrinsics(cfg):
    if cfg.camera:
        K = load_intrinsics(cfg.camera) if os.path.isfile(cfg.camera) else builtin_intrinsics(cfg.camera)
    elif cfg.dataset and os.path.isfile(os.path.join(cfg.dataset, "intrinsics.cfg")):
        K = load_intrinsics(os.path.join(cfg.dataset, "intrinsics.cfg"))
    else:
        K = builtin_intrinsics("tum_default")
    return replace(K, depth_scale=cfg.depth_scale)


def _canny(cfg):
    return CannyEdges(cfg.canny_low, cfg.canny_high, cfg.canny_sigma)


def open_input(cfg):
    cfg.check_paths()
    if not cfg.dataset:
        seq = demo_sequence(cfg.demo_frames)
        source = PrecomputedEdges(seq.edges) if cfg.edge_source == "external" else _canny(cfg)
        return RunInput(seq.frames, source, seq.groundtruth, True, len(seq.frames))
    seq = TUMSequence(cfg.dataset, resolve_intrinsics(cfg), cfg.max_dt)
    n = len(seq) if cfg.max_frames == 0 else min(cfg.max_frames, len(seq))
    if cfg.edge_source == "external":
        paths = [seq.edge_path(i, cfg.edges_dir) for i in range(n)]
        missing = [p for p in paths if not os.path.isfile(p)]
        if missing:
            raise DatasetError(f"missing external edge image: {missing[0]} "
                               f"({len(missing)} of {n} missing)")
        source = ExternalEdges(paths, cfg.edge_threshold)
    else:
        source = _canny(cfg)
    frames = (seq.frame(i) for i in range(n))
    return RunInput(frames, source, seq.groundtruth(), False, n)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def execute(cfg):
    """Track according to ``cfg`` and write the output files."""
    data = open_input(cfg)
    log.info("tracking %d frames", data.count)
    traj, diags = track_sequence(data.frames, data.edge_source, **cfg.tracker_kwargs())
    if all(d.lost for d in diags):
        raise TrackingLost("tracking never initialised: no frame had enough edge points")
    for path in (cfg.output, cfg.diagnostics):
        _ensure_parent(path)
    write_trajectory(traj, cfg.output)
    write_diagnostics(diags, cfg.diagnostics)
    if data.synthetic and cfg.groundtruth_output:
        _ensure_parent(cfg.groundtruth_output)
        write_trajectory(data.groundtruth, cfg.groundtruth_output)
    return traj, diags, data


def _summary(traj, diags, data, out):
    out.write(f"frames: {len(traj)}\n")
    out.write(f"keyframes: {sum(d.keyframe for d in diags)}\n")
    out.write(f"lost: {sum(d.lost for d in diags)}\n")
    if data.groundtruth is not None and len(data.groundtruth):
        out.write(f"ate_rmse: {ate(data.groundtruth, traj).rmse:.6f}\n")


def cmd_run(args, out=sys.stdout):
    cfg = _load_config(args)
    traj, diags, data = execute(cfg)
    out.write(f"trajectory: {cfg.output}\n")
    _summary(traj, diags, data, out)
    return 0


def cmd_demo(args, out=sys.stdout):
    cfg = _load_config(args).with_overrides(dataset="")
    traj, diags, data = execute(cfg)
    out.write(f"trajectory: {cfg.output}\ngroundtruth: {cfg.groundtruth_output}\n")
    _summary(traj, diags, data, out)
    rep = rpe(data.groundtruth, traj, delta=1, mode="frames")
    out.write(f"rpe_rmse_per_frame: {rep.rmse:.6f}\nrpe_rot_rmse_deg_per_frame: {rep.rot_rmse:.6f}\n")
    return 0


def _dump(rep, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in rep.sample_records():
            fh.write(json.dumps({k: round(v, 9) for k, v in rec.items()}) + "\n")


def cmd_eval(args, out=sys.stdout):
    gt = read_trajectory(args.groundtruth)
    est = read_trajectory(args.estimate)
    if args.command == "eval-ate":
        rep = ate(gt, est, args.max_dt)
    else:
        rep = rpe(gt, est, args.delta, args.mode, args.max_dt)
    for line in rep.lines():
        out.write(line + "\n")
    if args.dump:
        _dump(rep, args.dump)
    return 0


def _overlay(intensity, corners, radius):
    gray = np.clip(np.rint(intensity * 255.0), 0, 255).astype(np.uint8)
    img = cv2.cvtColor(gray, cv2.COLOR_GRAY2BGR)
    for x, y, _ in corners:
        cv2.circle(img, (int(x), int(y)), max(int(radius), 1), (0, 0, 255), 1)
    return img


def cmd_edges(args, out=sys.stdout):
    cfg = _load_config(args)
    n = args.frame
    if not cfg.dataset:
        seq = demo_sequence(cfg.demo_frames)
        if not 0 <= n < len(seq.frames):
            raise IndexOutOfRange(f"frame {n} outside sequence of {len(seq.frames)} frames")
        frame = seq.frames[n]
        source = PrecomputedEdges(seq.edges) if cfg.edge_source == "external" else _canny(cfg)
    else:
        cfg.check_paths()
        seq = TUMSequence(cfg.dataset, resolve_intrinsics(cfg), cfg.max_dt)
        frame = seq.frame(n)
        if cfg.edge_source == "external":
            path = seq.edge_path(n, cfg.edges_dir)
            if not os.path.isfile(path):
                raise DatasetError(f"missing external edge image: {path}")
            source = ExternalEdges({n: path}, cfg.edge_threshold)
        else:
            source = _canny(cfg)
    edges = source(n, frame)
    aug = CornerAugmenter(**vars(cfg.corner_config()))
    augmented = aug.transform(edges)
    os.makedirs(args.out_dir, exist_ok=True)
    names = {}
    for key, img in (("edges", edges.mask.astype(np.uint8) * 255),
                     ("corners", _overlay(frame.intensity, aug.corners_, cfg.stamp_radius)),
                     ("augmented", augmented.mask.astype(np.uint8) * 255)):
        names[key] = os.path.join(args.out_dir, f"{key}_{n:06d}.png")
        if not cv2.imwrite(names[key], img):
            raise DatasetError(f"cannot write {names[key]}")
    out.write(f"edge_pixels: {edges.count}\ncorners: {len(aug.corners_)}\n"
              f"augmented_pixels: {augmented.count}\n")
    for key, path in names.items():
        out.write(f"{key}: {path}\n")
    return 0


def _load_config(args):
    overrides = {k: getattr(args, "cfg_" + k) for k in RunConfig.keys()
                 if getattr(args, "cfg_" + k, None) is not None}
    return RunConfig.load(args.config, overrides)


def _add_config_args(p):
    p.add_argument("config", nargs="?", help="flat key = value config file")
    g = p.add_argument_group("config overrides")
    for key in RunConfig.keys():
        flags = ["--" + key] + (["--" + key.replace("_", "-")] if "_" in key else [])
        g.add_argument(*flags, dest="cfg_" + key, metavar="VALUE", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="edgevo", description="Edge-based RGB-D visual odometry")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="track a TUM sequence (or the synthetic demo)")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("demo", help="track the bundled synthetic sequence and score it")
    _add_config_args(p)
    p.set_defaults(func=cmd_demo)

    for name, helptext in (("eval-ate", "absolute trajectory error"),
                           ("eval-rpe", "relative pose error")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("groundtruth")
        p.add_argument("estimate")
        p.add_argument("--max-dt", type=float, default=0.02, help="association window (s)")
        p.add_argument("--dump", help="write per-sample errors to this file")
        if name == "eval-rpe":
            p.add_argument("--delta", type=float, default=1.0)
            p.add_argument("--mode", choices=("time", "frames"), default="time")
        p.set_defaults(func=cmd_eval)

    p = sub.add_parser("edges", help="write edge, corner overlay and augmented images for a frame")
    _add_config_args(p)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_edges)
    return parser


def main(argv=None, out=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out or sys.stdout)
    except EdgeVOError as exc:
        sys.stderr.write(f"error ({type(exc).__name__}): {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
